//! Bundled reference data and fixture integrity checks.

use std::path::Path;

use crate::analysis::VarianceInput;
use crate::protocol::CoincidenceTable;
use crate::report::sha256_hex;
use crate::{Error, Result};

pub const TABLE1_FILE_NAME: &str = "table1.csv";
pub const TABLE1_CSV: &str = include_str!("../fixtures/table1.csv");
pub const TABLE1_SHA256: &str = "a63a584bec2a73d4be11f327790cd9324ea82c1f63a6779a84b23224cee5cf8a";

/// The "±" column of the measured table as printed, in the same
/// Alice-row / Bob-column layout as [`TABLE1_CSV`].
pub const TABLE1_PRINTED_ERRORS: [[u64; 4]; 4] = [
    [31, 8, 21, 25],
    [8, 33, 22, 24],
    [26, 26, 31, 5],
    [26, 26, 5, 30],
];

pub fn table1() -> CoincidenceTable {
    CoincidenceTable::from_csv_str(TABLE1_CSV).expect("bundled table parses")
}

/// Checks `contents` (read from `path`) against its recorded checksum.
///
/// A sidecar `<path>.sha256` takes precedence; otherwise a file named
/// `table1.csv` must match the bundled table. Files with neither are
/// accepted unchecked.
pub fn verify_fixture(path: &Path, contents: &[u8]) -> Result<()> {
    let actual = sha256_hex(contents);
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".sha256");
    let expected = match std::fs::read_to_string(&sidecar) {
        Ok(text) => Some(
            text.split_whitespace()
                .next()
                .ok_or_else(|| Error::Parse(format!("empty checksum file {}", Path::new(&sidecar).display())))?
                .to_ascii_lowercase(),
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            (path.file_name().and_then(|n| n.to_str()) == Some(TABLE1_FILE_NAME)).then(|| TABLE1_SHA256.to_string())
        }
        Err(e) => return Err(e.into()),
    };
    match expected {
        Some(expected) if expected != actual => {
            Err(Error::Checksum { path: path.display().to_string(), expected, actual })
        }
        _ => Ok(()),
    }
}

/// The four published conditional variances: position differences in mm²,
/// momentum sums in ħ²/mm².
///
/// The fourth entry is printed with the label of the third and an
/// uncertainty of ±0.90; it is carried as the (Ap2, Bp2) pairing with ±0.090
/// and both printed values are kept.
pub fn reference_variances() -> (Vec<VarianceInput>, Vec<VarianceInput>) {
    let x = vec![
        VarianceInput::new("var(Ax1 - Bx1)", 0.152, Some(0.003)),
        VarianceInput::new("var(Ax2 - Bx2)", 0.080, Some(0.002)),
    ];
    let mut fourth = VarianceInput::new("var(Ap2 + Bp2)", 0.875, Some(0.090));
    fourth.printed_label = Some("var(Ap1 + Bp1)".into());
    fourth.printed_uncertainty = Some(0.90);
    let p = vec![VarianceInput::new("var(Ap1 + Bp1)", 0.912, Some(0.017)), fourth];
    (x, p)
}
