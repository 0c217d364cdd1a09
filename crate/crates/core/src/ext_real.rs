//! Extended reals `[-inf, +inf]` with the convention `inf - inf = -inf`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg};

/// A value in the extended real line.
///
/// Backed by an `f64` that is never NaN, so the order is total:
/// `NEG_INF < finite < POS_INF`.
#[derive(Clone, Copy, PartialEq)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const NEG_INF: ExtReal = ExtReal(f64::NEG_INFINITY);
    pub const POS_INF: ExtReal = ExtReal(f64::INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    /// Wraps an `f64`; `None` for NaN. Infinite inputs map to the marks.
    pub fn new(v: f64) -> Option<Self> {
        if v.is_nan() {
            None
        } else {
            Some(ExtReal(v))
        }
    }

    /// Wraps a finite number.
    ///
    /// Panics on NaN or infinities; use [`ExtReal::new`] for unchecked input.
    pub fn finite(v: f64) -> Self {
        assert!(v.is_finite(), "ExtReal::finite called with {v}");
        ExtReal(v)
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_neg_inf(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn is_pos_inf(self) -> bool {
        self.0 == f64::INFINITY
    }

    /// The finite value, if any.
    pub fn finite_value(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }

    /// Raw `f64`, with `±INFINITY` for the marks.
    pub fn to_f64(self) -> f64 {
        self.0
    }

    /// Multiplication by a nonnegative finite scalar. `0 * (±inf)` is
    /// taken to be the infinite mark itself, so scaling never creates NaN.
    pub fn scale(self, factor: f64) -> Self {
        debug_assert!(factor >= 0.0 && factor.is_finite());
        if self.is_finite() {
            ExtReal(self.0 * factor)
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        // no NaN by construction; -0.0 and 0.0 compare equal
        self.0.partial_cmp(&other.0).unwrap_or(Ordering::Equal)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        if self.is_neg_inf() || rhs.is_neg_inf() {
            ExtReal::NEG_INF
        } else {
            ExtReal(self.0 + rhs.0)
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: f64) -> ExtReal {
        self + ExtReal::new(rhs).expect("NaN added to ExtReal")
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;

    fn neg(self) -> ExtReal {
        ExtReal(-self.0)
    }
}

/// Multiplication by a finite real. The sign of the factor flips infinite
/// marks; a zero factor yields zero for finite values and keeps the mark.
impl Mul<f64> for ExtReal {
    type Output = ExtReal;

    fn mul(self, rhs: f64) -> ExtReal {
        debug_assert!(rhs.is_finite());
        if self.is_finite() {
            ExtReal(self.0 * rhs)
        } else if rhs < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl From<f64> for ExtReal {
    /// Panics on NaN.
    fn from(v: f64) -> Self {
        ExtReal::new(v).expect("NaN is not an extended real")
    }
}

impl fmt::Debug for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_neg_inf() {
            f.write_str("-inf")
        } else if self.is_pos_inf() {
            f.write_str("inf")
        } else {
            fmt::Display::fmt(&self.0, f)
        }
    }
}


mod serde_impl {
    use super::ExtReal;
    use serde::de::{self, Visitor};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::fmt;

    impl Serialize for ExtReal {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            if self.is_neg_inf() {
                s.serialize_str("-inf")
            } else if self.is_pos_inf() {
                s.serialize_str("inf")
            } else {
                s.serialize_f64(self.0)
            }
        }
    }

    struct ExtRealVisitor;

    impl Visitor<'_> for ExtRealVisitor {
        type Value = ExtReal;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a number or the string \"-inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtReal, E> {
            ExtReal::new(v).ok_or_else(|| E::custom("NaN is not permitted"))
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtReal, E> {
            Ok(ExtReal(v as f64))
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtReal, E> {
            Ok(ExtReal(v as f64))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtReal, E> {
            match v.trim() {
                "-inf" | "-Infinity" => Ok(ExtReal::NEG_INF),
                "inf" | "+inf" | "Infinity" => Ok(ExtReal::POS_INF),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }
    }

    impl<'de> Deserialize<'de> for ExtReal {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<ExtReal, D::Error> {
            d.deserialize_any(ExtRealVisitor)
        }
    }
}
