//! Capitalization transforms and target portfolio weights.
//!
//! A [`Transform`] maps a market cap to an unnormalized weight; normalizing
//! over a member universe yields [`TargetWeights`]. The seven power-family
//! transforms form a ladder ordered from most small-cap-concentrated
//! (`1/cap^2`) to most large-cap-concentrated (`cap^2`); equal weighting sits
//! outside that order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::SecurityId;

/// Weight transform applied to a market capitalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    InvSquare,
    Inv,
    InvSqrt,
    Log,
    Sqrt,
    Identity,
    Square,
    Equal,
}

impl Transform {
    /// The power-family ladder, ordered from the most small-cap-tilted rung
    /// to the most large-cap-tilted one.
    pub const LADDER: [Transform; 7] = [
        Transform::InvSquare,
        Transform::Inv,
        Transform::InvSqrt,
        Transform::Log,
        Transform::Sqrt,
        Transform::Identity,
        Transform::Square,
    ];

    /// Every transform, ladder rungs first, then equal weighting.
    pub const ALL: [Transform; 8] = [
        Transform::InvSquare,
        Transform::Inv,
        Transform::InvSqrt,
        Transform::Log,
        Transform::Sqrt,
        Transform::Identity,
        Transform::Square,
        Transform::Equal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Transform::InvSquare => "inv-square",
            Transform::Inv => "inv",
            Transform::InvSqrt => "inv-sqrt",
            Transform::Log => "log",
            Transform::Sqrt => "sqrt",
            Transform::Identity => "identity",
            Transform::Square => "square",
            Transform::Equal => "equal",
        }
    }

    /// Unnormalized weight for a market cap.
    ///
    /// Caps must be positive and finite; the log transform additionally
    /// requires cap > 1 so the weight stays positive. Natural log.
    pub fn apply(self, cap: f64) -> Result<f64> {
        if !cap.is_finite() || cap <= 0.0 {
            return Err(Error::Domain(format!(
                "market cap must be positive and finite, got {cap}"
            )));
        }
        let value = match self {
            Transform::InvSquare => (cap * cap).recip(),
            Transform::Inv => cap.recip(),
            Transform::InvSqrt => cap.sqrt().recip(),
            Transform::Log => {
                if cap <= 1.0 {
                    return Err(Error::Domain(format!(
                        "log transform requires cap > 1, got {cap}"
                    )));
                }
                cap.ln()
            }
            Transform::Sqrt => cap.sqrt(),
            Transform::Identity => cap,
            Transform::Square => cap * cap,
            Transform::Equal => 1.0,
        };
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::Domain(format!(
                "transform {self} of cap {cap} is not a positive finite weight"
            )));
        }
        Ok(value)
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inv-square" => Ok(Transform::InvSquare),
            "inv" => Ok(Transform::Inv),
            "inv-sqrt" => Ok(Transform::InvSqrt),
            "log" => Ok(Transform::Log),
            "sqrt" => Ok(Transform::Sqrt),
            "identity" => Ok(Transform::Identity),
            "square" => Ok(Transform::Square),
            "equal" => Ok(Transform::Equal),
            other => Err(Error::InvalidConfig(format!("unknown transform '{other}'"))),
        }
    }
}

/// Normalized portfolio weights over a member universe.
///
/// Weights are strictly positive and sum to 1 within 1e-12; the key set is
/// exactly the member set the weights were built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetWeights {
    weights: BTreeMap<SecurityId, f64>,
}

impl TargetWeights {
    /// Validating constructor; `target_weights` is the usual entry point.
    pub fn new(weights: BTreeMap<SecurityId, f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyUniverse("no weights".into()));
        }
        let mut sum = 0.0;
        for (id, w) in &weights {
            if !w.is_finite() || *w <= 0.0 {
                return Err(Error::Domain(format!(
                    "security {id}: weight must be positive and finite, got {w}"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &BTreeMap<SecurityId, f64> {
        &self.weights
    }

    pub fn get(&self, id: &SecurityId) -> Option<f64> {
        self.weights.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SecurityId, f64)> {
        self.weights.iter().map(|(id, w)| (id, *w))
    }
}

/// Normalized weights for a member universe given its market caps.
///
/// `w_i = f(cap_i) / sum_j f(cap_j)` where `f` is the transform. Errors name
/// the offending security when a cap is outside the transform's domain.
pub fn target_weights(
    kind: Transform,
    caps: &BTreeMap<SecurityId, f64>,
) -> Result<TargetWeights> {
    if caps.is_empty() {
        return Err(Error::EmptyUniverse("no member caps to weight".into()));
    }
    let mut raw: Vec<(&SecurityId, f64)> = Vec::with_capacity(caps.len());
    let mut sum = 0.0;
    for (id, cap) in caps {
        let value = kind.apply(*cap).map_err(|e| match e {
            Error::Domain(msg) => Error::Domain(format!("security {id}: {msg}")),
            other => other,
        })?;
        raw.push((id, value));
        sum += value;
    }
    if !sum.is_finite() || sum <= 0.0 {
        return Err(Error::Domain(format!(
            "transformed caps sum to {sum}; cannot normalize"
        )));
    }
    let weights = raw
        .into_iter()
        .map(|(id, value)| (id.clone(), value / sum))
        .collect();
    Ok(TargetWeights { weights })
}

// ==================== Tests ====================

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn caps_of(pairs: &[(&str, f64)]) -> BTreeMap<SecurityId, f64> {
        pairs
            .iter()
            .map(|(id, cap)| (SecurityId::from(*id), *cap))
            .collect()
    }

    fn weight(tw: &TargetWeights, id: &str) -> f64 {
        tw.get(&SecurityId::from(id)).unwrap()
    }

    // ==================== Transform string forms ====================

    #[test]
    fn transform_strings_round_trip() {
        for t in Transform::ALL {
            assert_eq!(t.as_str().parse::<Transform>().unwrap(), t);
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.as_str()));
            assert_eq!(serde_json::from_str::<Transform>(&json).unwrap(), t);
        }
        assert!("1/x^2".parse::<Transform>().is_err());
    }

    #[test]
    fn ladder_order_is_fixed() {
        let names: Vec<&str> = Transform::LADDER.iter().map(|t| t.as_str()).collect();
        assert_eq!(
            names,
            ["inv-square", "inv", "inv-sqrt", "log", "sqrt", "identity", "square"]
        );
        assert!(!Transform::LADDER.contains(&Transform::Equal));
    }

    // ==================== transform_value ====================

    #[test]
    fn transform_values_at_cap_four() {
        assert_eq!(Transform::InvSquare.apply(4.0).unwrap(), 1.0 / 16.0);
        assert_eq!(Transform::Inv.apply(4.0).unwrap(), 0.25);
        assert_eq!(Transform::InvSqrt.apply(4.0).unwrap(), 0.5);
        assert!((Transform::Log.apply(4.0).unwrap() - 4.0f64.ln()).abs() < 1e-15);
        assert_eq!(Transform::Sqrt.apply(4.0).unwrap(), 2.0);
        assert_eq!(Transform::Identity.apply(4.0).unwrap(), 4.0);
        assert_eq!(Transform::Square.apply(4.0).unwrap(), 16.0);
        assert_eq!(Transform::Equal.apply(4.0).unwrap(), 1.0);
    }

    #[test]
    fn transform_rejects_out_of_domain_caps() {
        for t in Transform::ALL {
            assert!(t.apply(0.0).is_err());
            assert!(t.apply(-3.0).is_err());
            assert!(t.apply(f64::NAN).is_err());
            assert!(t.apply(f64::INFINITY).is_err());
        }
        assert!(Transform::Log.apply(1.0).is_err());
        assert!(Transform::Log.apply(0.5).is_err());
        assert!(Transform::Log.apply(1.0 + 1e-9).is_ok());
    }

    // ==================== target_weights ====================

    #[test]
    fn inv_square_two_stock_weights() {
        let tw = target_weights(Transform::InvSquare, &caps_of(&[("A", 0.4), ("B", 0.6)]))
            .unwrap();
        assert!((weight(&tw, "A") - 0.69231).abs() < 1e-5);
        assert!((weight(&tw, "B") - 0.30769).abs() < 1e-5);
    }

    #[test]
    fn square_two_stock_weights() {
        // 0.16/0.52 = 4/13 and 0.36/0.52 = 9/13.
        let tw =
            target_weights(Transform::Square, &caps_of(&[("A", 0.4), ("B", 0.6)])).unwrap();
        assert!((weight(&tw, "A") - 4.0 / 13.0).abs() < 1e-12);
        assert!((weight(&tw, "B") - 9.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn log_weights_on_exponential_caps() {
        let e = std::f64::consts::E;
        let tw = target_weights(Transform::Log, &caps_of(&[("A", e), ("B", e * e)])).unwrap();
        assert!((weight(&tw, "A") - 1.0 / 3.0).abs() < 1e-12);
        assert!((weight(&tw, "B") - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn equal_ignores_caps() {
        let tw = target_weights(
            Transform::Equal,
            &caps_of(&[("A", 1.0), ("B", 7.0), ("C", 3000.0), ("D", 0.25), ("E", 9e9)]),
        )
        .unwrap();
        for id in ["A", "B", "C", "D", "E"] {
            assert!((weight(&tw, id) - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_caps_degenerate_to_equal_weight() {
        let caps = caps_of(&[("A", 42.0), ("B", 42.0), ("C", 42.0)]);
        for t in Transform::ALL {
            let tw = target_weights(t, &caps).unwrap();
            for id in ["A", "B", "C"] {
                assert!((weight(&tw, id) - 1.0 / 3.0).abs() < 1e-12, "{t}");
            }
        }
    }

    #[test]
    fn target_weight_errors_name_the_security() {
        let err = target_weights(Transform::Inv, &caps_of(&[("A", 2.0), ("BAD", -1.0)]))
            .unwrap_err();
        assert!(err.to_string().contains("BAD"), "{err}");

        let err =
            target_weights(Transform::Log, &caps_of(&[("TINY", 0.9), ("B", 10.0)])).unwrap_err();
        assert!(err.to_string().contains("TINY"), "{err}");

        assert!(matches!(
            target_weights(Transform::Equal, &BTreeMap::new()),
            Err(Error::EmptyUniverse(_))
        ));
    }

    #[test]
    fn validating_constructor_rejects_bad_weights() {
        let mut w = BTreeMap::new();
        w.insert(SecurityId::from("A"), 0.5);
        w.insert(SecurityId::from("B"), 0.6);
        assert!(TargetWeights::new(w).is_err());

        let mut w = BTreeMap::new();
        w.insert(SecurityId::from("A"), 1.0);
        assert!(TargetWeights::new(w).is_ok());
    }

    // ==================== Ladder concentration ====================

    /// Two-security weight on the smaller cap under a generalized power
    /// transform; the oracle for ladder concentration ordering.
    fn power_weight_on_small(p: f64, small: f64, big: f64) -> f64 {
        small.powf(p) / (small.powf(p) + big.powf(p))
    }

    #[test]
    fn power_rungs_concentrate_monotonically() {
        let (small, big) = (2e8, 9e9);
        let exponents = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let rungs = [
            Transform::InvSquare,
            Transform::Inv,
            Transform::InvSqrt,
            Transform::Sqrt,
            Transform::Identity,
            Transform::Square,
        ];
        let caps = caps_of(&[("S", small), ("B", big)]);
        let mut previous = f64::INFINITY;
        for (p, t) in exponents.iter().zip(rungs) {
            let oracle = power_weight_on_small(*p, small, big);
            let observed = weight(&target_weights(t, &caps).unwrap(), "S");
            assert!((observed - oracle).abs() < 1e-12, "{t} disagrees with power oracle");
            assert!(observed < previous, "{t} did not reduce small-cap weight");
            previous = observed;
        }
    }

    #[test]
    fn log_sits_between_inv_sqrt_and_sqrt() {
        let caps = caps_of(&[("S", 1e6), ("B", 1e8)]);
        let on_small = |t: Transform| weight(&target_weights(t, &caps).unwrap(), "S");
        let inv_sqrt = on_small(Transform::InvSqrt);
        let log = on_small(Transform::Log);
        let sqrt = on_small(Transform::Sqrt);
        assert!(inv_sqrt > log && log > sqrt);
    }

    // ==================== Property tests ====================

    proptest! {
        #[test]
        fn weights_normalize(caps in proptest::collection::vec(1.5f64..1e12, 1..40)) {
            let map: BTreeMap<SecurityId, f64> = caps
                .iter()
                .enumerate()
                .map(|(i, c)| (SecurityId::from(format!("S{i:03}")), *c))
                .collect();
            for t in Transform::ALL {
                let tw = target_weights(t, &map).unwrap();
                let sum: f64 = tw.iter().map(|(_, w)| w).sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                prop_assert_eq!(tw.len(), map.len());
                for (_, w) in tw.iter() {
                    prop_assert!(w > 0.0);
                }
            }
        }

        #[test]
        fn power_rungs_are_scale_invariant(
            caps in proptest::collection::vec(1e-3f64..1e9, 2..20),
            scale in 1e-6f64..1e6,
        ) {
            let map: BTreeMap<SecurityId, f64> = caps
                .iter()
                .enumerate()
                .map(|(i, c)| (SecurityId::from(format!("S{i:03}")), *c))
                .collect();
            let scaled: BTreeMap<SecurityId, f64> =
                map.iter().map(|(id, c)| (id.clone(), c * scale)).collect();
            let power_rungs = [
                Transform::InvSquare,
                Transform::Inv,
                Transform::InvSqrt,
                Transform::Sqrt,
                Transform::Identity,
                Transform::Square,
            ];
            for t in power_rungs {
                let a = target_weights(t, &map).unwrap();
                let b = target_weights(t, &scaled).unwrap();
                for (id, w) in a.iter() {
                    prop_assert!((w - b.get(id).unwrap()).abs() < 1e-12, "{}", t);
                }
            }
        }

        #[test]
        fn weights_are_permutation_equivariant(
            caps in proptest::collection::vec(2.0f64..1e10, 2..15),
        ) {
            // Swapping two securities' caps swaps their weights.
            let map: BTreeMap<SecurityId, f64> = caps
                .iter()
                .enumerate()
                .map(|(i, c)| (SecurityId::from(format!("S{i:03}")), *c))
                .collect();
            let a = SecurityId::from("S000");
            let b = SecurityId::from("S001");
            let mut swapped = map.clone();
            let (ca, cb) = (map[&a], map[&b]);
            swapped.insert(a.clone(), cb);
            swapped.insert(b.clone(), ca);
            for t in Transform::ALL {
                let w1 = target_weights(t, &map).unwrap();
                let w2 = target_weights(t, &swapped).unwrap();
                prop_assert!((w1.get(&a).unwrap() - w2.get(&b).unwrap()).abs() < 1e-12);
                prop_assert!((w1.get(&b).unwrap() - w2.get(&a).unwrap()).abs() < 1e-12);
            }
        }
    }
}
