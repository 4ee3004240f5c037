use serde::{Deserialize, Serialize};

use crate::arm::{check_dimensions, clamp_configuration, ArmSpec, Configuration, SectionAngles};
use crate::error::{Error, Result};

/// Sum tolerance for a tendon pair to be treated as consistent with the centerline.
const PAIR_SUM_TOL: f64 = 1e-6;

/// Antagonistic tendon pair in the bending plane of one section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TendonPair {
    /// Outer tendon, lengthens with bend.
    pub l_plus: f64,
    /// Inner tendon, shortens with bend.
    pub l_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TendonLengths {
    pub sections: Vec<TendonPair>,
}

/// Tendon lengths implied by the arc shape: `L ± r * theta`.
pub fn tendon_lengths(spec: &ArmSpec, q: &Configuration) -> Result<TendonLengths> {
    check_dimensions(spec, q)?;
    Ok(TendonLengths {
        sections: q
            .sections
            .iter()
            .zip(&spec.sections)
            .map(|(a, s)| TendonPair {
                l_plus: s.arc_length + s.tendon_radius * a.theta,
                l_minus: s.arc_length - s.tendon_radius * a.theta,
            })
            .collect(),
    })
}

/// Recovers bends from tendon lengths. The pair carries no information about
/// the plane rotation, so `phis` supplies it.
pub fn config_from_tendons(spec: &ArmSpec, t: &TendonLengths, phis: &[f64]) -> Result<Configuration> {
    let n = spec.section_count();
    for len in [t.sections.len(), phis.len()] {
        if len != n {
            return Err(Error::Dimension {
                expected: n,
                actual: len,
            });
        }
    }
    let mut sections = Vec::with_capacity(n);
    for (i, ((pair, s), &phi)) in t.sections.iter().zip(&spec.sections).zip(phis).enumerate() {
        let sum = pair.l_plus + pair.l_minus;
        let expected = 2.0 * s.arc_length;
        if !((sum - expected).abs() <= PAIR_SUM_TOL) {
            return Err(Error::Consistency {
                section: i,
                sum,
                expected,
            });
        }
        sections.push(SectionAngles {
            phi,
            theta: (pair.l_plus - pair.l_minus) / (2.0 * s.tendon_radius),
        });
    }
    clamp_configuration(spec, &Configuration { sections })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::default_embuddy_spec;

    #[test]
    fn straight_pair_equals_length() {
        let spec = default_embuddy_spec();
        let t = tendon_lengths(&spec, &spec.straight()).unwrap();
        for (p, s) in t.sections.iter().zip(&spec.sections) {
            assert_eq!((p.l_plus, p.l_minus), (s.arc_length, s.arc_length));
        }
    }

    #[test]
    fn full_bend_of_first_section() {
        let spec = default_embuddy_spec();
        let q = Configuration::from_pairs(&[(0.0, 1.39626), (0.0, 0.0), (0.0, 0.0)]);
        let t = tendon_lengths(&spec, &q).unwrap();
        assert!((t.sections[0].l_plus - 0.427925).abs() < 1e-6);
        assert!((t.sections[0].l_minus - 0.372075).abs() < 1e-6);
    }

    #[test]
    fn inverse_arithmetic() {
        let spec = default_embuddy_spec();
        let t = TendonLengths {
            sections: vec![
                TendonPair { l_plus: 0.427925, l_minus: 0.372075 },
                TendonPair { l_plus: 0.3, l_minus: 0.3 },
                TendonPair { l_plus: 0.3, l_minus: 0.3 },
            ],
        };
        let q = config_from_tendons(&spec, &t, &[0.0; 3]).unwrap();
        assert!((q.sections[0].theta - 1.39625).abs() < 1e-9);
    }

    #[test]
    fn inconsistent_pair_rejected() {
        let spec = default_embuddy_spec();
        let t = TendonLengths {
            sections: vec![
                TendonPair { l_plus: 0.45, l_minus: 0.40 },
                TendonPair { l_plus: 0.3, l_minus: 0.3 },
                TendonPair { l_plus: 0.3, l_minus: 0.3 },
            ],
        };
        assert!(matches!(
            config_from_tendons(&spec, &t, &[0.0; 3]),
            Err(Error::Consistency { section: 0, .. })
        ));
    }
}
