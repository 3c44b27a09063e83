use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location in the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub s1: f64,
    pub s2: f64,
}

impl Point {
    pub fn new(s1: f64, s2: f64) -> Self {
        Point { s1, s2 }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.s1 - other.s1).hypot(self.s2 - other.s2)
    }
}

/// Point-referenced observations of one analysis: locations, exposure,
/// outcome and optional measured covariates. The empirical measure over the
/// locations stands in for the sampling density.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSample {
    locations: Vec<Point>,
    exposure: Vec<f64>,
    outcome: Vec<f64>,
    covariates: Option<DMatrix<f64>>,
    covariate_names: Vec<String>,
}

impl SpatialSample {
    pub fn new(locations: Vec<Point>, exposure: Vec<f64>, outcome: Vec<f64>) -> Result<Self> {
        let sample = SpatialSample {
            locations,
            exposure,
            outcome,
            covariates: None,
            covariate_names: Vec::new(),
        };
        sample.validate()?;
        Ok(sample)
    }

    /// Attach an `n x p` covariate matrix. Names default to `z1..zp` when
    /// `names` is empty.
    pub fn with_covariates(mut self, covariates: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if covariates.nrows() != self.len() {
            return Err(Error::invalid(format!(
                "covariate matrix has {} rows, sample has {}",
                covariates.nrows(),
                self.len()
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariates contain non-finite values"));
        }
        let names = if names.is_empty() {
            (1..=covariates.ncols()).map(|k| format!("z{k}")).collect()
        } else if names.len() == covariates.ncols() {
            names
        } else {
            return Err(Error::invalid("covariate name count does not match columns"));
        };
        self.covariates = Some(covariates);
        self.covariate_names = names;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let n = self.locations.len();
        if n < 2 {
            return Err(Error::invalid(format!("sample needs at least 2 locations, got {n}")));
        }
        if self.exposure.len() != n || self.outcome.len() != n {
            return Err(Error::invalid(format!(
                "length mismatch: {} locations, {} exposure values, {} outcome values",
                n,
                self.exposure.len(),
                self.outcome.len()
            )));
        }
        for (i, p) in self.locations.iter().enumerate() {
            if !(p.s1.is_finite() && p.s2.is_finite()) {
                return Err(Error::invalid(format!("location {i} is not finite")));
            }
            if !(0.0..=1.0).contains(&p.s1) || !(0.0..=1.0).contains(&p.s2) {
                return Err(Error::invalid(format!(
                    "location {i} ({}, {}) lies outside the unit square",
                    p.s1, p.s2
                )));
            }
        }
        if let Some(i) = self.exposure.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("exposure value {i} is not finite")));
        }
        if let Some(i) = self.outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("outcome value {i} is not finite")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[Point] {
        &self.locations
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn covariates(&self) -> Option<&DMatrix<f64>> {
        self.covariates.as_ref()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Replace exposure and outcome, dropping covariates.
    pub(crate) fn with_fields(&self, exposure: Vec<f64>, outcome: Vec<f64>) -> Result<Self> {
        SpatialSample::new(self.locations.clone(), exposure, outcome)
    }

    /// Sample with the outcome replaced; covariates are kept.
    pub fn map_outcome(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = self.clone();
        out.outcome = self.outcome.iter().map(|&y| f(y)).collect();
        out.validate()?;
        Ok(out)
    }
}
