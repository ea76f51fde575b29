use super::Real;

/// Cell-wise nonlinearity applied before interpolation.
///
/// The periodic variants wrap arbitrary cell contents into `[0, 1]`, which is
/// what lets a primary array's output be used as a coordinate into the next
/// array.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Nonlinearity {
    #[default]
    None,
    /// Period-2 triangle wave: 0 at even integers, 1 at odd integers.
    Triangle,
    /// `(1 + sin(n v)) / 2` with frequency `n`.
    Sine(f32),
}

impl Nonlinearity {
    pub fn is_periodic(self) -> bool {
        !matches!(self, Nonlinearity::None)
    }

    #[inline]
    pub fn apply<T: Real>(self, v: T) -> T {
        match self {
            Nonlinearity::None => v,
            Nonlinearity::Triangle => {
                let one = T::one();
                let m = wrap2(v);
                one - (m - one).abs()
            }
            Nonlinearity::Sine(n) => {
                let half = T::lit(0.5);
                half + half * (T::lit(n as f64) * v).sin()
            }
        }
    }

    /// Derivative of [`apply`](Self::apply). For the triangle wave the slope is
    /// `+1` on `[0, 1]` (breakpoints included) and `-1` on `(1, 2)`.
    #[inline]
    pub fn derivative<T: Real>(self, v: T) -> T {
        match self {
            Nonlinearity::None => T::one(),
            Nonlinearity::Triangle => {
                if wrap2(v) <= T::one() {
                    T::one()
                } else {
                    -T::one()
                }
            }
            Nonlinearity::Sine(n) => {
                let n = T::lit(n as f64);
                T::lit(0.5) * n * (n * v).cos()
            }
        }
    }

    pub(crate) fn id(self) -> u8 {
        match self {
            Nonlinearity::None => 0,
            Nonlinearity::Triangle => 1,
            Nonlinearity::Sine(_) => 2,
        }
    }
}

/// `v mod 2` mapped into `[0, 2]`.
#[inline]
fn wrap2<T: Real>(v: T) -> T {
    let two = T::lit(2.0);
    v - two * (v / two).floor()
}
