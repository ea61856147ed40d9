//! Level-structure vocabulary: the two long-lived manifolds, named basis
//! states inside them, and the three qubit encodings.
//!
//! Manifold `A` is the fluorescing ground manifold and `B` the dark
//! metastable one. Only the handful of Zeeman states that the transfer
//! pulses address are named; everything else in `A` is lumped into
//! [`StateLabel::WrongGround`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, SpamError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Manifold {
    A,
    B,
}

/// A named hyperfine/Zeeman state. Fields are private so `|m_F| <= F` and
/// `F ∈ {1, 2}` always hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    manifold: Manifold,
    f: u8,
    m_f: i8,
}

impl BasisState {
    pub fn new(manifold: Manifold, f: u8, m_f: i8) -> Result<Self> {
        if !(1..=2).contains(&f) || m_f.unsigned_abs() > f {
            return Err(SpamError::InvalidArgument(format!(
                "no state F={f}, mF={m_f}: need F in {{1,2}} and |mF| <= F"
            )));
        }
        Ok(Self { manifold, f, m_f })
    }

    const fn known(manifold: Manifold, f: u8, m_f: i8) -> Self {
        Self { manifold, f, m_f }
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn f(&self) -> u8 {
        self.f
    }

    pub fn m_f(&self) -> i8 {
        self.m_f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateLabel {
    Basis(BasisState),
    /// Population in `A` outside every pulse-addressed state. Fluoresces,
    /// never moved by a transfer pulse.
    WrongGround,
    /// No ion in the trap.
    Lost,
}

pub const A_F2_M0: StateLabel = StateLabel::Basis(BasisState::known(Manifold::A, 2, 0));
pub const A_F1_M0: StateLabel = StateLabel::Basis(BasisState::known(Manifold::A, 1, 0));
pub const B_F2_MM1: StateLabel = StateLabel::Basis(BasisState::known(Manifold::B, 2, -1));
pub const B_F1_MM1: StateLabel = StateLabel::Basis(BasisState::known(Manifold::B, 1, -1));
pub const B_F2_MP1: StateLabel = StateLabel::Basis(BasisState::known(Manifold::B, 2, 1));

impl StateLabel {
    pub fn basis(manifold: Manifold, f: u8, m_f: i8) -> Result<Self> {
        BasisState::new(manifold, f, m_f).map(StateLabel::Basis)
    }

    /// Manifold of the state; `WrongGround` counts as `A`, `Lost` has none.
    pub fn manifold(&self) -> Option<Manifold> {
        match self {
            StateLabel::Basis(b) => Some(b.manifold),
            StateLabel::WrongGround => Some(Manifold::A),
            StateLabel::Lost => None,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        !matches!(self, StateLabel::Basis(_))
    }

    /// True if population detection scatters photons from this state.
    pub fn fluoresces(&self) -> bool {
        self.manifold() == Some(Manifold::A)
    }

    pub fn in_metastable(&self) -> bool {
        self.manifold() == Some(Manifold::B)
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Basis(b) => {
                let m = match b.manifold {
                    Manifold::A => 'A',
                    Manifold::B => 'B',
                };
                write!(f, "{m}:F={},mF={}", b.f, b.m_f)
            }
            StateLabel::WrongGround => f.write_str("WrongGround"),
            StateLabel::Lost => f.write_str("Lost"),
        }
    }
}

impl FromStr for StateLabel {
    type Err = SpamError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || SpamError::InvalidStateLabel(s.to_string());
        match s {
            "WrongGround" => return Ok(StateLabel::WrongGround),
            "Lost" => return Ok(StateLabel::Lost),
            _ => {}
        }
        let (manifold, rest) = s.split_once(':').ok_or_else(bad)?;
        let manifold = match manifold {
            "A" => Manifold::A,
            "B" => Manifold::B,
            _ => return Err(bad()),
        };
        let (f, m_f) = rest.split_once(',').ok_or_else(bad)?;
        let f: u8 = f.strip_prefix("F=").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let m_f: i8 = m_f
            .strip_prefix("mF=")
            .ok_or_else(bad)?
            .trim_start_matches('+')
            .parse()
            .map_err(|_| bad())?;
        StateLabel::basis(manifold, f, m_f).map_err(|_| bad())
    }
}

impl Serialize for StateLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StateLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Transfer pulses only connect the two manifolds.
pub fn transition_allowed(from: StateLabel, to: StateLabel) -> Result<bool> {
    for s in [from, to] {
        if s.is_sentinel() {
            return Err(SpamError::SentinelState(s));
        }
    }
    Ok(from.manifold() != to.manifold())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EncodingName {
    Optical,
    Metastable,
    Ground,
}

impl EncodingName {
    pub const ALL: [EncodingName; 3] = [EncodingName::Optical, EncodingName::Metastable, EncodingName::Ground];

    pub fn short(&self) -> char {
        match self {
            EncodingName::Optical => 'O',
            EncodingName::Metastable => 'M',
            EncodingName::Ground => 'G',
        }
    }
}

impl fmt::Display for EncodingName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EncodingName::Optical => "optical",
            EncodingName::Metastable => "metastable",
            EncodingName::Ground => "ground",
        };
        f.write_str(s)
    }
}

impl FromStr for EncodingName {
    type Err = SpamError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "o" | "optical" => Ok(EncodingName::Optical),
            "m" | "metastable" => Ok(EncodingName::Metastable),
            "g" | "ground" => Ok(EncodingName::Ground),
            _ => Err(SpamError::invalid(format!("unknown encoding `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitEncoding {
    pub name: EncodingName,
    pub zero: StateLabel,
    pub one: StateLabel,
    /// States used only while moving population around.
    pub intermediates: Vec<StateLabel>,
}

impl QubitEncoding {
    pub fn state(&self, q: crate::protocol::QubitState) -> StateLabel {
        match q {
            crate::protocol::QubitState::Zero => self.zero,
            crate::protocol::QubitState::One => self.one,
        }
    }
}

pub fn encoding_catalog(name: EncodingName) -> QubitEncoding {
    match name {
        EncodingName::Optical => QubitEncoding {
            name,
            zero: B_F2_MM1,
            one: A_F2_M0,
            intermediates: vec![B_F1_MM1],
        },
        EncodingName::Metastable => QubitEncoding {
            name,
            zero: B_F2_MM1,
            one: B_F1_MM1,
            intermediates: vec![A_F2_M0],
        },
        EncodingName::Ground => QubitEncoding {
            name,
            zero: A_F2_M0,
            one: A_F1_M0,
            intermediates: vec![B_F2_MM1, B_F2_MP1, B_F1_MM1],
        },
    }
}
