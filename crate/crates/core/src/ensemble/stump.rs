use serde::{Deserialize, Serialize};

/// Depth-1 classifier over one binary feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    /// Class predicted for bit 0 and bit 1.
    pub classes: [usize; 2],
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

impl Stump {
    /// Fit the per-bit class map on `rows` with sample `weights` (uniform when `None`).
    ///
    /// Each bit value maps to its weighted majority class, lowest index on ties. A bit value that
    /// no row takes maps to the majority of all rows.
    pub fn fit(
        feature: usize,
        column: &[bool],
        labels: &[usize],
        rows: &[usize],
        weights: Option<&[f64]>,
        n_classes: usize,
    ) -> Self {
        let mut tally = [vec![0.0; n_classes], vec![0.0; n_classes]];
        let mut seen = [false; 2];
        for &r in rows {
            let b = column[r] as usize;
            tally[b][labels[r]] += weights.map_or(1.0, |w| w[r]);
            seen[b] = true;
        }
        let overall: Vec<f64> = tally[0].iter().zip(&tally[1]).map(|(a, b)| a + b).collect();
        let fallback = argmax(&overall);
        let pick = |b: usize| if seen[b] { argmax(&tally[b]) } else { fallback };
        Stump {
            feature,
            classes: [pick(0), pick(1)],
        }
    }

    pub fn predict_bit(&self, bit: bool) -> usize {
        self.classes[bit as usize]
    }
}
