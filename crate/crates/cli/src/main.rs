use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use epr_qkd::adversary::BasisPolicy;
use epr_qkd::analysis::{self, DetectorLabel, GaussianFit, ScanSpec, VarianceInput};
use epr_qkd::config::{self, RunConfig};
use epr_qkd::protocol::{self, CoincidenceTable, QberReport};
use epr_qkd::report::{self, Report};
use epr_qkd::{fixtures, Basis, Error, Side};

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_ABORTED: u8 = 4;

#[derive(Parser)]
#[command(name = "epr-qkd", version, about = "Position-momentum entanglement QKD simulator and analysis tools")]
struct Cli {
    /// Accept table files whose checksum does not match the recorded one.
    #[arg(long, global = true)]
    no_verify: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// QBER of a coincidence table with no eavesdropper.
    Qber {
        table: PathBuf,
        #[command(flatten)]
        out: ReportArgs,
    },
    /// Predicted QBER under random-basis intercept-resend.
    EvePredict {
        table: PathBuf,
        /// Probability that a wrong-basis resend fires each of Bob's detectors.
        #[arg(long = "p", default_value_t = 0.5)]
        p_resend: f64,
        #[command(flatten)]
        out: ReportArgs,
    },
    /// Run a full key-distribution session.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Override the attack policy from the config (none, always_x, always_p, uniform_random).
        #[arg(long)]
        attack: Option<BasisPolicy>,
    },
    /// Simulate a coincidence scan with one of Alice's detectors fixed and fit it.
    Scan {
        #[command(flatten)]
        run: RunArgs,
        /// Alice's fixed detector, e.g. Ax1.
        #[arg(long)]
        fixed: DetectorLabel,
        /// Basis pair (Alice, Bob), e.g. xx or xp. Defaults to the fixed detector's basis twice.
        #[arg(long)]
        bases: Option<String>,
        /// Grid of Bob slit centers as start:stop:step in mm.
        #[arg(long, default_value = "0:3:0.1")]
        grid: String,
        /// Pairs emitted per grid point; defaults to scan.pairs_per_point from the config.
        #[arg(long)]
        pairs: Option<u64>,
    },
    /// Evaluate the EPR variance-product inequality.
    EprCheck {
        /// Position-difference variances in mm², comma separated.
        #[arg(long, value_delimiter = ',')]
        var_x: Vec<f64>,
        /// Momentum-sum variances in ħ²/mm², comma separated.
        #[arg(long, value_delimiter = ',')]
        var_p: Vec<f64>,
        /// Use the bundled published variances.
        #[arg(long, conflicts_with_all = ["var_x", "var_p", "fits"])]
        reference: bool,
        /// Scan reports written by `scan`; xx scans give position variances, pp scans momentum ones.
        #[arg(long, num_args = 1.., conflicts_with_all = ["var_x", "var_p"])]
        fits: Vec<PathBuf>,
        #[command(flatten)]
        out: ReportArgs,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// Write a JSON report to this path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (`section.key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; falls back to EPR_QKD_SEED, then the config, then 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides output.dir from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> epr_qkd::Result<(RunConfig, u64, PathBuf)> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let seed = config::resolve_seed(self.seed, Some(&cfg))?;
        let dir = self.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
        Ok((cfg, seed, dir))
    }
}

struct Outcome {
    text: String,
    report: Report,
    report_path: Option<PathBuf>,
    aborted: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let command: Vec<String> = std::env::args().collect();
    match run(&cli, command, started) {
        Ok(out) => {
            print!("{}", out.text);
            if let Some(path) = &out.report_path {
                if let Err(e) = out.report.to_json().and_then(|j| report::atomic_write(path, j.as_bytes())) {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            }
            if out.aborted {
                ExitCode::from(EXIT_ABORTED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

fn run(cli: &Cli, command: Vec<String>, started: Instant) -> epr_qkd::Result<Outcome> {
    let finish = |text: String, config_hash: Option<String>, seed: Option<u64>, results: Value, path: Option<PathBuf>, aborted: bool| Outcome {
        text,
        report: Report { command: command.clone(), config_hash, seed, results, duration_s: started.elapsed().as_secs_f64() },
        report_path: path,
        aborted,
    };
    match &cli.command {
        Command::Qber { table, out } => {
            let t = load_table(table, cli.no_verify)?;
            let q = protocol::qber_from_counts(&t)?;
            Ok(finish(format_qber(&q), None, None, serde_json::to_value(q)?, out.report.clone(), false))
        }
        Command::EvePredict { table, p_resend, out } => {
            if !(0.0..=1.0).contains(p_resend) {
                return Err(Error::InvalidParameter { name: "p", reason: format!("must lie in [0, 1], got {p_resend}") });
            }
            let t = load_table(table, cli.no_verify)?;
            let q = protocol::qber_with_eve_prediction(&t, *p_resend)?;
            let mut text = format!("p_resend         = {p_resend:.4} (probability)\n");
            text.push_str(&format!("chi              = {:.1} (counts)\n", q.chi.unwrap_or(0.0)));
            text.push_str(&format!("wrong            = {:.1} (counts)\n", q.p_wrong));
            text.push_str(&format!("grand total      = {:.0} (counts)\n", q.p_wrong + q.p_right));
            text.push_str(&format!("predicted qber   = {:.4} ± {:.4} (fraction)\n", q.qber, q.uncertainty));
            let results = json!({ "p_resend": p_resend, "qber": q });
            Ok(finish(text, None, None, results, out.report.clone(), false))
        }
        Command::Simulate { run, attack } => {
            let (mut cfg, seed, dir) = run.load()?;
            if let Some(policy) = attack {
                cfg.attack.policy = *policy;
            }
            let session = cfg.session_config(seed)?;
            let setup = cfg.build_setup()?;
            let attack = cfg.attack_config();
            let result = protocol::run_session(&setup.source, &setup.alice, &setup.bob, &session, Some(&attack))?;

            result.table.write_csv(&dir.join("coincidences.csv"))?;
            report::atomic_write(&dir.join("alice_key.txt"), protocol::bits_to_string(&result.sifted_bits_a).as_bytes())?;
            report::atomic_write(&dir.join("bob_key.txt"), protocol::bits_to_string(&result.sifted_bits_b).as_bytes())?;

            let q = &result.estimate;
            let mut text = String::new();
            let _ = writeln!(text, "attack           = {}", cfg.attack.policy);
            let _ = writeln!(text, "seed             = {seed}");
            let _ = writeln!(text, "emitted pairs    = {} (pairs)", result.emitted_pairs);
            let _ = writeln!(text, "coincidences     = {} (counts)", result.coincidences);
            let _ = writeln!(text, "sifted           = {} (counts), fraction {:.4} (of coincidences)", result.sifted_count, result.sifted_fraction);
            let _ = writeln!(text, "basis agreement  = {:.4} (fraction of emitted pairs)", result.basis_agreement_fraction);
            text.push_str(&format_qber(q));
            let _ = writeln!(text, "threshold        = {:.4} (fraction)", session.qber_threshold);
            let _ = writeln!(text, "key length       = {} (bits)", result.sifted_bits_a.len());
            if let Some(d) = result.key_disagreement {
                let _ = writeln!(text, "key disagreement = {d:.4} (fraction)");
            }
            let _ = writeln!(text, "aborted          = {}", result.aborted);
            let _ = writeln!(text, "wrote {}", dir.display());
            let results = json!({
                "source": setup.source,
                "session": session,
                "attack": attack,
                "estimate": q,
                "aborted": result.aborted,
                "emitted_pairs": result.emitted_pairs,
                "coincidences": result.coincidences,
                "sifted_count": result.sifted_count,
                "sifted_fraction": result.sifted_fraction,
                "basis_agreement_fraction": result.basis_agreement_fraction,
                "key_length_bits": result.sifted_bits_a.len(),
                "key_disagreement": result.key_disagreement,
                "table": result.table,
            });
            let hash = report::config_hash(&cfg)?;
            let aborted = result.aborted;
            Ok(finish(text, Some(hash), Some(seed), results, Some(dir.join("report.json")), aborted))
        }
        Command::Scan { run, fixed, bases, grid, pairs } => {
            let (cfg, seed, dir) = run.load()?;
            if fixed.side != Side::Alice {
                return Err(Error::InvalidParameter { name: "fixed", reason: "must be one of Alice's detectors (A..)".into() });
            }
            let scanned = parse_bases(bases.as_deref(), fixed.basis)?;
            let grid_mm = analysis::parse_grid(grid)?;
            let pairs_per_point = pairs.unwrap_or(cfg.scan.pairs_per_point);
            let setup = cfg.build_setup()?;
            let spec = ScanSpec { fixed_detector: *fixed, scanned_basis: scanned, grid_mm, pairs_per_point, seed };
            let scan = analysis::scan_simulation(&setup.source, &setup.alice, &setup.bob, &spec)?;
            let fit = analysis::fit_gaussian(&scan)?;
            let scale = setup.bob.latent_per_mm(scanned);
            let variance = analysis::conditional_variance(&fit, scale).ok();
            let variance_uncertainty = fit.sigma_mm.zip(fit.sigma_uncertainty()).map(|(s, ds)| 2.0 * scale * scale * s * ds);

            let stem = format!("scan_{fixed}_{}{}", fixed.basis, scanned);
            let csv_path = dir.join(format!("{stem}.csv"));
            scan.write_csv(&csv_path)?;

            let (len_unit, var_unit) = units(scanned);
            let mut text = String::new();
            let _ = writeln!(text, "fixed detector   = {fixed}, bases {}{}", fixed.basis, scanned);
            let _ = writeln!(text, "points           = {}, {} pairs each", scan.counts.len(), pairs_per_point);
            match fit.max_min_ratio {
                Some(r) => {
                    let _ = writeln!(text, "max/min ratio    = {r:.4} (dimensionless)");
                }
                None => {
                    let _ = writeln!(text, "max/min ratio    = unbounded (some points have zero counts)");
                }
            }
            let _ = writeln!(text, "flat             = {}", fit.flat);
            if let Some(sigma) = fit.sigma_mm {
                let _ = writeln!(text, "amplitude        = {:.1} ± {:.1} (counts)", fit.amplitude, fit.amplitude_uncertainty().unwrap_or(f64::NAN));
                let _ = writeln!(text, "center           = {:.4} ± {:.4} (mm)", fit.center_mm, fit.center_uncertainty().unwrap_or(f64::NAN));
                let _ = writeln!(text, "sigma            = {:.4} ± {:.4} (mm)", sigma, fit.sigma_uncertainty().unwrap_or(f64::NAN));
            }
            let _ = writeln!(text, "offset           = {:.1} ± {:.1} (counts)", fit.offset, fit.offset_uncertainty().unwrap_or(f64::NAN));
            let _ = writeln!(text, "chi-square       = {:.2} for {} dof (dimensionless)", fit.chi_square, fit.degrees_of_freedom);
            if let Some(v) = variance {
                let _ = writeln!(text, "crystal variance = {:.4} ± {:.4} ({var_unit}), scale {:.4} ({len_unit} per detector mm)", v, variance_uncertainty.unwrap_or(f64::NAN), scale);
            }
            let _ = writeln!(text, "wrote {}", csv_path.display());
            let results = json!({
                "fixed_detector": fixed,
                "basis_pair": scan.basis_pair,
                "grid_mm": spec.grid_mm,
                "pairs_per_point": pairs_per_point,
                "counts": scan.counts,
                "fit": fit,
                "latent_per_mm": scale,
                "variance": variance,
                "variance_uncertainty": variance_uncertainty,
            });
            let hash = report::config_hash(&cfg)?;
            Ok(finish(text, Some(hash), Some(seed), results, Some(dir.join(format!("{stem}.json"))), false))
        }
        Command::EprCheck { var_x, var_p, reference, fits, out } => {
            let (xs, ps) = if *reference {
                fixtures::reference_variances()
            } else if !fits.is_empty() {
                variances_from_fits(fits)?
            } else {
                if var_x.is_empty() || var_p.is_empty() {
                    return Err(Error::InvalidParameter {
                        name: "epr-check",
                        reason: "give --var-x and --var-p, --fits, or --reference".into(),
                    });
                }
                let wrap = |prefix: &str, vs: &[f64]| -> Vec<VarianceInput> {
                    vs.iter().enumerate().map(|(k, &v)| VarianceInput::new(format!("{prefix}{}", k + 1), v, None)).collect()
                };
                (wrap("var_x", var_x), wrap("var_p", var_p))
            };
            let r = analysis::duan_check(&xs, &ps)?;
            let mut text = String::new();
            for v in &r.var_x_minus {
                let _ = writeln!(text, "{:<17}= {} (mm²)", v.label, with_error(v.value, v.uncertainty));
            }
            for v in &r.var_p_plus {
                let _ = writeln!(text, "{:<17}= {} (ħ²/mm²)", v.label, with_error(v.value, v.uncertainty));
            }
            let _ = writeln!(text, "mean var x       = {:.4} (mm²)", r.mean_var_x_minus);
            let _ = writeln!(text, "mean var p       = {:.4} (ħ²/mm²)", r.mean_var_p_plus);
            let _ = writeln!(text, "product          = {} (ħ²)", with_error(r.product, r.product_uncertainty));
            let _ = writeln!(text, "product (2 dp)   = {:.2} (ħ²)", r.product);
            let _ = writeln!(text, "bound            = {:.2} (ħ²)", r.bound);
            let _ = writeln!(text, "satisfied        = {}", r.satisfied);
            if let Some(d) = r.sigma_distance {
                let _ = writeln!(text, "sigma distance   = {d:.1} (standard deviations)");
            }
            for f in &r.flags {
                let _ = writeln!(text, "note: {f}");
            }
            Ok(finish(text, None, None, serde_json::to_value(&r)?, out.report.clone(), false))
        }
    }
}

fn load_table(path: &Path, no_verify: bool) -> epr_qkd::Result<CoincidenceTable> {
    let bytes = std::fs::read(path)?;
    if !no_verify {
        fixtures::verify_fixture(path, &bytes)?;
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse(format!("{} is not UTF-8 text", path.display())))?;
    CoincidenceTable::from_csv_str(&text)
}

fn format_qber(q: &QberReport) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    let mut text = String::new();
    let _ = writeln!(text, "wrong            = {:.0} (counts)", q.p_wrong);
    let _ = writeln!(text, "right            = {:.0} (counts)", q.p_right);
    let _ = writeln!(text, "qber             = {:.4} ± {:.4} (fraction)", q.qber, q.uncertainty);
    let _ = writeln!(text, "qber_xx          = {} (fraction)", opt(q.qber_xx));
    let _ = writeln!(text, "qber_pp          = {} (fraction)", opt(q.qber_pp));
    text
}

fn with_error(value: f64, err: Option<f64>) -> String {
    match err {
        Some(e) => format!("{value:.4} ± {e:.4}"),
        None => format!("{value:.4}"),
    }
}

fn units(basis: Basis) -> (&'static str, &'static str) {
    match basis {
        Basis::X => ("mm", "mm²"),
        Basis::P => ("ħ/mm", "ħ²/mm²"),
    }
}

fn parse_bases(bases: Option<&str>, fixed: Basis) -> epr_qkd::Result<Basis> {
    let Some(b) = bases else { return Ok(fixed) };
    let chars: Vec<char> = b.chars().collect();
    if chars.len() != 2 {
        return Err(Error::Parse(format!("basis pair `{b}` must be two letters such as xx or xp")));
    }
    let a: Basis = chars[0].to_string().parse()?;
    if a != fixed {
        return Err(Error::InvalidParameter {
            name: "bases",
            reason: format!("first basis `{a}` does not match the fixed detector's basis `{fixed}`"),
        });
    }
    chars[1].to_string().parse()
}

fn variances_from_fits(paths: &[PathBuf]) -> epr_qkd::Result<(Vec<VarianceInput>, Vec<VarianceInput>)> {
    let (mut xs, mut ps) = (Vec::new(), Vec::new());
    for path in paths {
        let rep: Report = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let r = &rep.results;
        let field = |name: &str| r.get(name).ok_or_else(|| Error::Parse(format!("{} has no `{name}` field", path.display())));
        let fit: GaussianFit = serde_json::from_value(field("fit")?.clone())?;
        let (a, b): (Basis, Basis) = serde_json::from_value(field("basis_pair")?.clone())?;
        let fixed: DetectorLabel = serde_json::from_value(field("fixed_detector")?.clone())?;
        let scale = field("latent_per_mm")?
            .as_f64()
            .ok_or_else(|| Error::Parse(format!("{}: latent_per_mm is not a number", path.display())))?;
        let value = analysis::conditional_variance(&fit, scale)?;
        let uncertainty = fit.sigma_mm.zip(fit.sigma_uncertainty()).map(|(s, ds)| 2.0 * scale * scale * s * ds);
        let label = match (a, b) {
            (Basis::X, Basis::X) => format!("var(Ax{0} - Bx{0})", fixed.index + 1),
            (Basis::P, Basis::P) => format!("var(Ap{0} + Bp{0})", fixed.index + 1),
            _ => {
                return Err(Error::InvalidParameter {
                    name: "fits",
                    reason: format!("{} is a mixed-basis scan", path.display()),
                })
            }
        };
        let input = VarianceInput::new(label, value, uncertainty);
        if a == Basis::X {
            xs.push(input);
        } else {
            ps.push(input);
        }
    }
    if xs.is_empty() || ps.is_empty() {
        return Err(Error::InvalidParameter { name: "fits", reason: "need at least one xx and one pp scan report".into() });
    }
    Ok((xs, ps))
}
