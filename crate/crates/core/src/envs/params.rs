use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dynamics-specification parameters of a simulator (pole length, masses, ...).
///
/// Values are always finite and, when bounds are attached, inside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    names: Vec<String>,
    bounds: Option<Vec<(f64, f64)>>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if values.len() != names.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: values.len(),
            });
        }
        let p = Self {
            values,
            names,
            bounds: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unnamed vector (`p0`, `p1`, ...) without bounds.
    pub fn unnamed(values: Vec<f64>) -> Result<Self> {
        let names = (0..values.len()).map(|i| format!("p{i}")).collect();
        Self::new(values, names)
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: bounds.len(),
            });
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "bounds for `{}` are empty: [{lo}, {hi}]",
                    self.names[i]
                )));
            }
        }
        self.bounds = Some(bounds);
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn bounds(&self) -> Option<&[(f64, f64)]> {
        self.bounds.as_deref()
    }

    /// Same names and bounds, new values. Fails if the values are invalid.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: values.len(),
            });
        }
        let p = Self {
            values,
            names: self.names.clone(),
            bounds: self.bounds.clone(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Whether `values` would be accepted by [`with_values`](Self::with_values).
    pub fn admits(&self, values: &[f64]) -> bool {
        values.len() == self.values.len()
            && values.iter().all(|v| v.is_finite())
            && self.bounds.as_ref().is_none_or(|b| {
                values
                    .iter()
                    .zip(b)
                    .all(|(v, &(lo, hi))| lo <= *v && *v <= hi)
            })
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name: self.names[i].clone(),
                    value: v,
                    reason: "not finite".into(),
                });
            }
            if let Some(b) = &self.bounds {
                let (lo, hi) = b[i];
                if v < lo || v > hi {
                    return Err(Error::InvalidParameter {
                        name: self.names[i].clone(),
                        value: v,
                        reason: format!("outside physical bounds [{lo}, {hi}]"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn check_same_dim(&self, other: &ParamVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_out_of_bounds() {
        assert!(ParamVector::unnamed(vec![f64::NAN]).is_err());
        let p = ParamVector::unnamed(vec![1.0]).unwrap();
        assert!(p.clone().with_bounds(vec![(2.0, 3.0)]).is_err());
        let p = p.with_bounds(vec![(0.5, 3.0)]).unwrap();
        assert!(p.with_values(vec![0.1]).is_err());
        assert!(p.with_values(vec![1.0, 2.0]).is_err());
        assert_eq!(p.with_values(vec![2.5]).unwrap().values(), &[2.5]);
        assert!(!p.admits(&[4.0]));
        assert!(p.admits(&[3.0]));
    }
}
