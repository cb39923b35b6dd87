//! Integer simulation time.
//!
//! All internal arithmetic uses picoseconds so that PON frame boundaries
//! (125 µs) and radio slot boundaries (250/500 µs) compare exactly. Seconds
//! appear only at API edges.

use core::fmt;
use core::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub const PS_PER_NS: u64 = 1_000;
pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_MS: u64 = 1_000_000_000;
pub const PS_PER_S: u64 = 1_000_000_000_000;

/// A point in (or span of) simulated time, in picoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * PS_PER_NS)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * PS_PER_US)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * PS_PER_MS)
    }

    /// Converts seconds to the nearest picosecond. Negative and NaN inputs
    /// clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime::ZERO;
        }
        let ps = libm::round(s * PS_PER_S as f64);
        if ps >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(ps as u64)
        }
    }

    /// Converts fractional microseconds to the nearest picosecond.
    pub fn from_us_f64(us: f64) -> Self {
        Self::from_secs_f64(us * 1e-6)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_S as f64
    }

    pub fn as_us_f64(self) -> f64 {
        self.0 as f64 / PS_PER_US as f64
    }

    pub const fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub const fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        match self.0.checked_sub(rhs.0) {
            Some(v) => Some(SimTime(v)),
            None => None,
        }
    }

    /// Smallest `k * period + phase` that is `>= self`. `phase` is reduced
    /// modulo `period`.
    pub fn next_boundary(self, period: SimTime, phase: SimTime) -> SimTime {
        debug_assert!(period.0 > 0);
        let phase = phase.0 % period.0;
        if self.0 <= phase {
            return SimTime(phase);
        }
        let since = self.0 - phase;
        let k = since.div_ceil(period.0);
        SimTime(phase + k * period.0)
    }

    /// Index of the boundary returned by [`SimTime::next_boundary`].
    pub fn next_boundary_index(self, period: SimTime, phase: SimTime) -> u64 {
        let b = self.next_boundary(period, phase);
        (b.0 - phase.0 % period.0) / period.0
    }

    /// Index `k` of the interval `[k * period, (k + 1) * period)` holding `self`.
    pub const fn period_index(self, period: SimTime) -> u64 {
        self.0 / period.0
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let us = self.0 / PS_PER_US;
        let frac = self.0 % PS_PER_US;
        if frac == 0 {
            write!(f, "{us}us")
        } else {
            write!(f, "{us}.{frac:06}us")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seconds_round_trip_at_api_edge() {
        assert_eq!(SimTime::from_secs_f64(0.5e-3), SimTime::from_us(500));
        assert_eq!(SimTime::from_secs_f64(125e-6), SimTime::from_us(125));
        assert_eq!(SimTime::from_secs_f64(-1.0), SimTime::ZERO);
        assert_eq!(SimTime::from_us(250).as_secs_f64(), 250e-6);
    }

    #[test]
    fn boundary_is_inclusive() {
        let f = SimTime::from_us(125);
        assert_eq!(SimTime::from_us(1500).next_boundary(f, SimTime::ZERO), SimTime::from_us(1500));
        assert_eq!(SimTime::from_us(1510).next_boundary(f, SimTime::ZERO), SimTime::from_us(1625));
        assert_eq!(SimTime::from_us(10).next_boundary(f, SimTime::ZERO), SimTime::from_us(125));
        assert_eq!(SimTime::ZERO.next_boundary(f, SimTime::ZERO), SimTime::ZERO);
    }

    #[test]
    fn boundary_with_phase() {
        let slot = SimTime::from_us(500);
        let phase = SimTime::from_us(62) + SimTime::from_ns(500);
        assert_eq!(SimTime::ZERO.next_boundary(slot, phase), phase);
        assert_eq!(SimTime::from_us(63).next_boundary(slot, phase), phase + slot);
        assert_eq!(SimTime::from_us(63).next_boundary_index(slot, phase), 1);
    }

    #[test]
    fn display() {
        assert_eq!(alloc::format!("{}", SimTime::from_us(3)), "3us");
        assert_eq!(alloc::format!("{}", SimTime::from_ps(1_500_000)), "1.500000us");
    }
}
