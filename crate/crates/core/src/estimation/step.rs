use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-continuous nondecreasing step function starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepFunctionRepr", into = "StepFunctionRepr")]
pub struct StepFunction {
    locations: Vec<f64>,
    sizes: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StepFunctionRepr {
    locations: Vec<f64>,
    sizes: Vec<f64>,
}

impl TryFrom<StepFunctionRepr> for StepFunction {
    type Error = Error;

    fn try_from(r: StepFunctionRepr) -> Result<Self> {
        StepFunction::new(r.locations, r.sizes)
    }
}

impl From<StepFunction> for StepFunctionRepr {
    fn from(s: StepFunction) -> Self {
        StepFunctionRepr {
            locations: s.locations,
            sizes: s.sizes,
        }
    }
}

impl StepFunction {
    pub fn new(locations: Vec<f64>, sizes: Vec<f64>) -> Result<Self> {
        if locations.len() != sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: locations.len(),
                found: sizes.len(),
            });
        }
        if locations.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(
                "step function locations must be strictly increasing".into(),
            ));
        }
        if let Some(s) = sizes.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "step function jump sizes must be positive and finite, got {s}"
            )));
        }
        let cumulative = sizes
            .iter()
            .scan(0.0, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        Ok(StepFunction {
            locations,
            sizes,
            cumulative,
        })
    }

    pub fn empty() -> Self {
        StepFunction {
            locations: Vec::new(),
            sizes: Vec::new(),
            cumulative: Vec::new(),
        }
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.locations.iter().copied().zip(self.sizes.iter().copied())
    }

    /// Value at `t`: total size of jumps at locations `<= t`. Flat past the last jump.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.locations.partition_point(|&x| x <= t);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// Left limit at `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let idx = self.locations.partition_point(|&x| x < t);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// Index range of jumps with location in `(lo, hi]`.
    pub fn range_in(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.locations.partition_point(|&x| x <= lo);
        let b = self.locations.partition_point(|&x| x <= hi);
        a..b.max(a)
    }

    /// Index of the first jump strictly after `t`.
    pub fn first_after(&self, t: f64) -> usize {
        self.locations.partition_point(|&x| x <= t)
    }
}

/// Right-continuous nonincreasing survival curve starting at one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn constant_one() -> Self {
        SurvivalCurve {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            1.0
        } else {
            self.values[idx - 1]
        }
    }

    pub fn eval_left(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x < t);
        if idx == 0 {
            1.0
        } else {
            self.values[idx - 1]
        }
    }
}

/// Product-limit survival `prod (1 - dLambda)` of a cumulative hazard.
pub fn ple_survival(baseline: &StepFunction) -> Result<SurvivalCurve> {
    let mut surv = 1.0;
    let mut values = Vec::with_capacity(baseline.len());
    for (at, size) in baseline.jumps() {
        if size > 1.0 {
            return Err(Error::InvalidHazard { at, size });
        }
        surv *= 1.0 - size;
        values.push(surv);
    }
    Ok(SurvivalCurve {
        times: baseline.locations().to_vec(),
        values,
    })
}
