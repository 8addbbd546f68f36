use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the neutral band, in percent.
pub const NEUTRAL_BAND_PCT: f64 = 0.5;

/// Three-way market direction. Review corpora reuse the same slots as
/// Low / Medium / High.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MarketLabel {
    #[serde(alias = "Low", alias = "fall")]
    Fall,
    #[serde(alias = "Medium", alias = "neutral")]
    Neutral,
    #[serde(alias = "High", alias = "rise")]
    Rise,
}

impl MarketLabel {
    pub const ALL: [MarketLabel; 3] = [MarketLabel::Fall, MarketLabel::Neutral, MarketLabel::Rise];

    pub fn index(self) -> usize {
        match self {
            MarketLabel::Fall => 0,
            MarketLabel::Neutral => 1,
            MarketLabel::Rise => 2,
        }
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    /// Display name for review-style corpora.
    pub fn review_alias(self) -> &'static str {
        match self {
            MarketLabel::Fall => "Low",
            MarketLabel::Neutral => "Medium",
            MarketLabel::Rise => "High",
        }
    }
}

/// Fall below −0.5 %, Rise above +0.5 %, Neutral in between (inclusive).
pub fn label_from_pct(pct: f64) -> MarketLabel {
    if pct < -NEUTRAL_BAND_PCT {
        MarketLabel::Fall
    } else if pct > NEUTRAL_BAND_PCT {
        MarketLabel::Rise
    } else {
        MarketLabel::Neutral
    }
}

/// Percentage change between two closes and the resulting label.
pub fn derive_label(close_prev: f64, close_curr: f64) -> Result<(f64, MarketLabel)> {
    if !(close_prev > 0.0) || !close_prev.is_finite() {
        return Err(Error::invalid(format!(
            "previous close must be positive, got {close_prev}"
        )));
    }
    if !close_curr.is_finite() {
        return Err(Error::NonFinite("close"));
    }
    let pct = (close_curr - close_prev) / close_prev * 100.0;
    Ok((pct, label_from_pct(pct)))
}

/// Upper (inclusive) star bounds of the Low and Medium bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarBreakpoints {
    pub low_max: f64,
    pub medium_max: f64,
}

impl Default for StarBreakpoints {
    fn default() -> Self {
        Self {
            low_max: 5.5,
            medium_max: 7.5,
        }
    }
}

pub fn label_from_stars(stars: f64, bp: StarBreakpoints) -> MarketLabel {
    if stars <= bp.low_max {
        MarketLabel::Fall
    } else if stars <= bp.medium_max {
        MarketLabel::Neutral
    } else {
        MarketLabel::Rise
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        let (pct, l) = derive_label(100.0, 101.0).unwrap();
        assert!((pct - 1.0).abs() < 1e-12);
        assert_eq!(l, MarketLabel::Rise);
        let (pct, l) = derive_label(100.0, 100.5).unwrap();
        assert!((pct - 0.5).abs() < 1e-12);
        assert_eq!(l, MarketLabel::Neutral);
        let (pct, l) = derive_label(200.0, 198.0).unwrap();
        assert!((pct + 1.0).abs() < 1e-12);
        assert_eq!(l, MarketLabel::Fall);
    }

    #[test]
    fn boundaries_are_neutral() {
        let got: Vec<_> = [-0.51, -0.5, 0.0, 0.5, 0.51]
            .iter()
            .map(|&p| label_from_pct(p))
            .collect();
        use MarketLabel::*;
        assert_eq!(got, vec![Fall, Neutral, Neutral, Neutral, Rise]);
    }

    #[test]
    fn non_positive_prev_close_rejected() {
        assert!(derive_label(0.0, 1.0).is_err());
        assert!(derive_label(-3.0, 1.0).is_err());
        assert!(derive_label(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn stars() {
        let bp = StarBreakpoints::default();
        assert_eq!(label_from_stars(5.5, bp), MarketLabel::Fall);
        assert_eq!(label_from_stars(5.6, bp), MarketLabel::Neutral);
        assert_eq!(label_from_stars(7.5, bp), MarketLabel::Neutral);
        assert_eq!(label_from_stars(7.6, bp), MarketLabel::Rise);
        assert_eq!(MarketLabel::Rise.review_alias(), "High");
    }

    #[test]
    fn aliases_parse() {
        let l: MarketLabel = serde_json::from_str("\"Medium\"").unwrap();
        assert_eq!(l, MarketLabel::Neutral);
    }

    proptest! {
        #[test]
        fn regions_partition(prev in 1e-3f64..1e6, curr in 0f64..2e6) {
            let (pct, label) = derive_label(prev, curr).unwrap();
            let hits = [pct < -0.5, (-0.5..=0.5).contains(&pct), pct > 0.5];
            prop_assert_eq!(hits.iter().filter(|&&h| h).count(), 1);
            prop_assert!(hits[label.index()]);
        }
    }
}
