use std::fmt;

use serde::{Deserialize, Serialize};

/// Measurement basis: imaging (position) or Fourier (momentum).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    X,
    P,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::X, Basis::P];

    pub fn other(self) -> Basis {
        match self {
            Basis::X => Basis::P,
            Basis::P => Basis::X,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Basis::X => 0,
            Basis::P => 1,
        }
    }

    pub fn from_bit(bit: bool) -> Basis {
        if bit {
            Basis::P
        } else {
            Basis::X
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::X => "x",
            Basis::P => "p",
        })
    }
}

impl std::str::FromStr for Basis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" | "X" => Ok(Basis::X),
            "p" | "P" => Ok(Basis::P),
            other => Err(crate::Error::Parse(format!("unknown basis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Alice,
    Bob,
}

impl Side {
    pub fn letter(self) -> char {
        match self {
            Side::Alice => 'A',
            Side::Bob => 'B',
        }
    }
}
