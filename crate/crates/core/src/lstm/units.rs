use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Dims;
use crate::{Error, Result};

/// A hidden unit, addressed by 1-based layer and 1-based index within the
/// layer. Displays as `L2-U17`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitRef {
    pub layer: usize,
    pub unit: usize,
}

impl UnitRef {
    pub fn new(layer: usize, unit: usize) -> UnitRef {
        UnitRef { layer, unit }
    }

    /// 1-based index counting across layers: layer `l`, unit `u` maps to
    /// `(l - 1) * H + u`.
    pub fn flat(self, hidden: usize) -> usize {
        (self.layer - 1) * hidden + self.unit
    }

    pub fn from_flat(flat: usize, hidden: usize) -> Result<UnitRef> {
        if flat == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(format!("flat unit index {flat} is not 1-based")));
        }
        Ok(UnitRef {
            layer: (flat - 1) / hidden + 1,
            unit: (flat - 1) % hidden + 1,
        })
    }

    pub fn validate(self, dims: &Dims) -> Result<()> {
        if self.layer == 0
            || self.unit == 0
            || self.layer > dims.n_layers
            || self.unit > dims.hidden_dim
        {
            return Err(Error::UnitOutOfRange {
                layer: self.layer,
                unit: self.unit,
                layers: dims.n_layers,
                hidden: dims.hidden_dim,
            });
        }
        Ok(())
    }

    /// 0-based (layer, unit).
    pub fn index(self) -> (usize, usize) {
        (self.layer - 1, self.unit - 1)
    }

    pub fn all(dims: &Dims) -> Vec<UnitRef> {
        (1..=dims.n_layers)
            .flat_map(|l| (1..=dims.hidden_dim).map(move |u| UnitRef::new(l, u)))
            .collect()
    }

    pub fn of_layer(dims: &Dims, layer: usize) -> Vec<UnitRef> {
        (1..=dims.hidden_dim).map(|u| UnitRef::new(layer, u)).collect()
    }

    /// Parse a comma-separated list such as `L2-U17,L2-U42`.
    pub fn parse_list(s: &str) -> Result<Vec<UnitRef>> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(UnitRef::from_str)
            .collect()
    }
}

impl fmt::Display for UnitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}-U{}", self.layer, self.unit)
    }
}

impl FromStr for UnitRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<UnitRef> {
        let bad = || Error::InvalidArgument(format!("cannot parse unit {s:?}, expected e.g. L2-U17"));
        let t = s.trim();
        let (l, u) = t.split_once('-').ok_or_else(bad)?;
        let l = l.strip_prefix(['L', 'l']).ok_or_else(bad)?;
        let u = u.strip_prefix(['U', 'u']).ok_or_else(bad)?;
        let layer: usize = l.parse().map_err(|_| bad())?;
        let unit: usize = u.parse().map_err(|_| bad())?;
        if layer == 0 || unit == 0 {
            return Err(bad());
        }
        Ok(UnitRef { layer, unit })
    }
}

impl Serialize for UnitRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UnitRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Clamp the hidden activation to zero after every step.
    #[default]
    Hidden,
    /// Clamp both the hidden activation and the cell state.
    HiddenAndCell,
}

/// Set of units whose outputs are forced to zero at every timestep.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationMask {
    pub units: BTreeSet<UnitRef>,
    #[serde(default)]
    pub mode: AblationMode,
}

impl AblationMask {
    pub fn none() -> AblationMask {
        AblationMask::default()
    }

    pub fn of<I: IntoIterator<Item = UnitRef>>(units: I) -> AblationMask {
        AblationMask {
            units: units.into_iter().collect(),
            mode: AblationMode::Hidden,
        }
    }

    pub fn with_mode(mut self, mode: AblationMode) -> AblationMask {
        self.mode = mode;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn contains(&self, u: UnitRef) -> bool {
        self.units.contains(&u)
    }

    pub fn resolve(&self, dims: &Dims) -> Result<ResolvedMask> {
        let mut per_layer = vec![Vec::new(); dims.n_layers];
        for u in &self.units {
            u.validate(dims)?;
            let (l, i) = u.index();
            per_layer[l].push(i);
        }
        Ok(ResolvedMask {
            per_layer,
            clamp_cell: self.mode == AblationMode::HiddenAndCell,
        })
    }
}

/// Mask resolved to 0-based indices per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedMask {
    pub per_layer: Vec<Vec<usize>>,
    pub clamp_cell: bool,
}

impl ResolvedMask {
    pub fn none(n_layers: usize) -> ResolvedMask {
        ResolvedMask {
            per_layer: vec![Vec::new(); n_layers],
            clamp_cell: false,
        }
    }

    pub(crate) fn apply(&self, layer: usize, h: &mut [f64], c: &mut [f64]) {
        for &i in &self.per_layer[layer] {
            h[i] = 0.0;
            if self.clamp_cell {
                c[i] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn dims() -> Dims {
        Dims {
            vocab_size: 10,
            embed_dim: 4,
            hidden_dim: 650,
            n_layers: 2,
        }
    }

    #[test]
    fn display_parse_round_trip() {
        let u = UnitRef::new(2, 126);
        assert_eq!(u.to_string(), "L2-U126");
        assert_eq!("l2-u126".parse::<UnitRef>().unwrap(), u);
        assert_eq!(u.flat(650), 776);
        assert_eq!(UnitRef::from_flat(776, 650).unwrap(), u);
        assert_eq!(UnitRef::from_flat(650, 650).unwrap(), UnitRef::new(1, 650));
        assert!("L0-U1".parse::<UnitRef>().is_err());
        assert!("2-126".parse::<UnitRef>().is_err());
        assert_eq!(
            UnitRef::parse_list("L2-U17, L2-U42").unwrap(),
            vec![UnitRef::new(2, 17), UnitRef::new(2, 42)]
        );
    }

    #[test]
    fn out_of_range_units_are_rejected() {
        let d = dims();
        assert!(AblationMask::of([UnitRef::new(3, 1)]).resolve(&d).is_err());
        assert!(AblationMask::of([UnitRef::new(1, 651)]).resolve(&d).is_err());
        let r = AblationMask::of([UnitRef::new(2, 1), UnitRef::new(2, 650)])
            .resolve(&d)
            .unwrap();
        assert_eq!(r.per_layer, vec![vec![], vec![0, 649]]);
    }
}
