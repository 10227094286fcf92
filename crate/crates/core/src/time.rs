//! Virtual time. All timestamps and durations in the simulator are virtual
//! seconds; nothing ever reads a wall clock.

use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Mul, Sub};

/// A point in (or span of) virtual time, in seconds.
///
/// Backed by an `f64`; ordering goes through `total_cmp` so the event queue
/// has a total order even though the type only derives `PartialOrd`.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct VirtualTime(f64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0.0);

    pub fn from_secs(secs: f64) -> Self {
        debug_assert!(secs.is_finite(), "virtual time must be finite");
        VirtualTime(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }

    pub fn min(self, other: VirtualTime) -> VirtualTime {
        VirtualTime(self.0.min(other.0))
    }

    pub fn max(self, other: VirtualTime) -> VirtualTime {
        VirtualTime(self.0.max(other.0))
    }

    /// |self - other|, used for divergence metrics.
    pub fn abs_diff(self, other: VirtualTime) -> VirtualTime {
        VirtualTime((self.0 - other.0).abs())
    }

    pub fn total_cmp(&self, other: &VirtualTime) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for VirtualTime {
    type Output = VirtualTime;
    fn add(self, rhs: VirtualTime) -> VirtualTime {
        VirtualTime(self.0 + rhs.0)
    }
}

impl AddAssign for VirtualTime {
    fn add_assign(&mut self, rhs: VirtualTime) {
        self.0 += rhs.0;
    }
}

impl Sub for VirtualTime {
    type Output = VirtualTime;
    fn sub(self, rhs: VirtualTime) -> VirtualTime {
        VirtualTime(self.0 - rhs.0)
    }
}

impl Mul<f64> for VirtualTime {
    type Output = VirtualTime;
    fn mul(self, rhs: f64) -> VirtualTime {
        VirtualTime(self.0 * rhs)
    }
}
