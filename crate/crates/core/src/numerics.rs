//! Integration and estimation settings shared by the experiment modules.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics<S> {
    /// Time step for every integrator.
    pub dt: S,
    /// Transient discarded by the asymptotic estimators.
    pub burn_in: S,
    /// Tangent QR renormalisation period, in steps.
    pub renorm_every: usize,
    /// Number of batches for batch-means confidence intervals.
    pub batches: usize,
    /// Cloud diameter below which a pullback is called synchronised.
    pub sync_epsilon: S,
}

impl<S: Scalar> Default for Numerics<S> {
    fn default() -> Self {
        Self {
            dt: S::lit(1e-3),
            burn_in: S::lit(100.0),
            renorm_every: 10,
            batches: 20,
            sync_epsilon: S::lit(1e-3),
        }
    }
}

impl<S: Scalar> Numerics<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > S::zero() && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.burn_in >= S::zero()) {
            return Err(Error::InvalidArgument(format!("burn_in must be >= 0, got {}", self.burn_in)));
        }
        if self.renorm_every == 0 {
            return Err(Error::InvalidArgument("renorm_every must be >= 1".into()));
        }
        if self.batches < 2 {
            return Err(Error::InvalidArgument("need at least 2 batches".into()));
        }
        if !(self.sync_epsilon > S::zero()) {
            return Err(Error::InvalidArgument("sync_epsilon must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_dt(mut self, dt: S) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_burn_in(mut self, burn_in: S) -> Self {
        self.burn_in = burn_in;
        self
    }

    /// Round a horizon to the nearest whole number of steps.
    pub fn snap(&self, t: S) -> S {
        (t / self.dt).round() * self.dt
    }
}
