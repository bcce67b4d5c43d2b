use crate::error::{Error, Result};

/// Number of static descriptor columns.
pub const NUM_STATIC: usize = 7;

pub const STATIC_NAMES: [&str; NUM_STATIC] = [
    "speed_limit",
    "lanes",
    "length",
    "free_flow_speed",
    "curvature",
    "slope_percent",
    "functional_class",
];

/// Static descriptors of a road link or segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticAttrs {
    /// km/h
    pub speed_limit: u32,
    pub lanes: u32,
    /// metres
    pub length: f64,
    /// km/h
    pub free_flow_speed: f64,
    /// 1/m
    pub curvature: f64,
    /// percent
    pub slope_percent: f64,
    /// 1 = major artery .. 5 = local street
    pub functional_class: u8,
}

impl StaticAttrs {
    pub fn validate(&self) -> Result<()> {
        fn check(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
            if !(lo..=hi).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "{name} = {v} outside [{lo}, {hi}]"
                )));
            }
            Ok(())
        }
        check("speed_limit", self.speed_limit as f64, 10.0, 130.0)?;
        check("lanes", self.lanes as f64, 1.0, 4.0)?;
        check("length", self.length, 2.0, 2127.0)?;
        check("free_flow_speed", self.free_flow_speed, 10.0, 120.0)?;
        check("curvature", self.curvature, 0.0, 1000.0)?;
        check("slope_percent", self.slope_percent, -100.0, 100.0)?;
        check("functional_class", self.functional_class as f64, 1.0, 5.0)
    }

    pub fn to_features(&self) -> [f64; NUM_STATIC] {
        [
            self.speed_limit as f64,
            self.lanes as f64,
            self.length,
            self.free_flow_speed,
            self.curvature,
            self.slope_percent,
            self.functional_class as f64,
        ]
    }
}

/// How MEAN-aggregated descriptors are averaged when links are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanMode {
    #[default]
    LengthWeighted,
    Arithmetic,
}

impl std::str::FromStr for MeanMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "length-weighted" | "weighted" => Ok(MeanMode::LengthWeighted),
            "arithmetic" | "plain" => Ok(MeanMode::Arithmetic),
            _ => Err(Error::Config(format!("unknown mean mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for MeanMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MeanMode::LengthWeighted => "length-weighted",
            MeanMode::Arithmetic => "arithmetic",
        })
    }
}

/// Merges the descriptors of a chain of links into one segment:
/// speed limit, lanes and functional class take the minimum, length the
/// sum, and free-flow speed, curvature and slope the mean.
pub fn aggregate_links(chain: &[StaticAttrs], mode: MeanMode) -> Result<StaticAttrs> {
    let first = chain
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot aggregate an empty chain".into()))?;
    if chain.len() == 1 {
        return Ok(*first);
    }
    let total_len: f64 = chain.iter().map(|a| a.length).sum();
    let mean = |f: fn(&StaticAttrs) -> f64| -> f64 {
        match mode {
            MeanMode::LengthWeighted if total_len > 0.0 => {
                chain.iter().map(|a| f(a) * a.length).sum::<f64>() / total_len
            }
            _ => chain.iter().map(f).sum::<f64>() / chain.len() as f64,
        }
    };
    Ok(StaticAttrs {
        speed_limit: chain.iter().map(|a| a.speed_limit).min().unwrap(),
        lanes: chain.iter().map(|a| a.lanes).min().unwrap(),
        length: total_len,
        free_flow_speed: mean(|a| a.free_flow_speed),
        curvature: mean(|a| a.curvature),
        slope_percent: mean(|a| a.slope_percent),
        functional_class: chain.iter().map(|a| a.functional_class).min().unwrap(),
    })
}

/// Unweighted element-wise mean of equally long profiles.
pub fn average_profiles(profiles: &[&[f64]]) -> Result<Vec<f64>> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot average zero profiles".into()))?;
    if let Some(p) = profiles.iter().find(|p| p.len() != first.len()) {
        return Err(Error::Shape {
            op: "average_profiles",
            left: vec![first.len()],
            right: vec![p.len()],
        });
    }
    let n = profiles.len() as f64;
    Ok((0..first.len())
        .map(|t| profiles.iter().map(|p| p[t]).sum::<f64>() / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn attrs(speed_limit: u32, length: f64, ffs: f64) -> StaticAttrs {
        StaticAttrs {
            speed_limit,
            lanes: 2,
            length,
            free_flow_speed: ffs,
            curvature: 0.0,
            slope_percent: 0.0,
            functional_class: 3,
        }
    }

    #[test]
    fn min_rule_for_speed_limit() {
        let out = aggregate_links(
            &[attrs(50, 10.0, 40.0), attrs(30, 10.0, 40.0)],
            MeanMode::Arithmetic,
        )
        .unwrap();
        assert_eq!(out.speed_limit, 30);
    }

    #[test]
    fn sum_rule_for_length() {
        let out = aggregate_links(
            &[attrs(50, 100.0, 40.0), attrs(50, 50.0, 40.0)],
            MeanMode::LengthWeighted,
        )
        .unwrap();
        assert_eq!(out.length, 150.0);
    }

    #[test]
    fn single_link_is_identity() {
        let a = StaticAttrs {
            speed_limit: 70,
            lanes: 3,
            length: 123.4,
            free_flow_speed: 61.5,
            curvature: 2.0,
            slope_percent: -1.5,
            functional_class: 2,
        };
        assert_eq!(aggregate_links(&[a], MeanMode::LengthWeighted).unwrap(), a);
    }

    #[test]
    fn mean_modes() {
        let chain = [attrs(50, 100.0, 40.0), attrs(50, 300.0, 60.0)];
        let plain = aggregate_links(&chain, MeanMode::Arithmetic).unwrap();
        assert_eq!(plain.free_flow_speed, 50.0);
        let weighted = aggregate_links(&chain, MeanMode::LengthWeighted).unwrap();
        assert_eq!(weighted.free_flow_speed, 55.0);
    }

    #[test]
    fn empty_chain_is_invalid() {
        assert!(matches!(
            aggregate_links(&[], MeanMode::Arithmetic),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn profiles_are_averaged_unweighted() {
        let a = [10.0, 20.0];
        let b = [30.0, 40.0];
        assert_eq!(average_profiles(&[&a, &b]).unwrap(), vec![20.0, 30.0]);
        assert!(average_profiles(&[&a, &[1.0]]).is_err());
    }

    #[test]
    fn table_ranges_are_enforced() {
        let mut a = attrs(50, 10.0, 40.0);
        assert!(a.validate().is_ok());
        a.lanes = 5;
        assert!(a.validate().is_err());
        a.lanes = 1;
        a.length = 1.0;
        assert!(a.validate().is_err());
    }
}
