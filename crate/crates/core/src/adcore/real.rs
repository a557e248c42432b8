use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point element type of tape tensors: `f64` for verification,
/// `f32` for training.
pub trait Real:
    num_like::Float + Copy + Send + Sync + Debug + Display + Default + Sum + PartialOrd + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = a * b` (or `c += a * b` when `accumulate`), with `a` m×k and
    /// `b` k×n, each optionally stored transposed. Row-major throughout.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        c: &mut [Self],
        accumulate: bool,
    );

    /// A per-thread buffer of `len` elements with unspecified contents.
    fn take_scratch(len: usize) -> Vec<Self>;
    /// Returns a buffer from [`Real::take_scratch`] for reuse.
    fn give_scratch(buf: Vec<Self>);
}

/// Minimal arithmetic surface needed by the engine; kept local so the crate
/// does not depend on a numeric-traits crate for two impls.
pub mod num_like {
    use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

    pub trait Float:
        Add<Output = Self>
        + Sub<Output = Self>
        + Mul<Output = Self>
        + Div<Output = Self>
        + Neg<Output = Self>
        + AddAssign
        + SubAssign
        + MulAssign
        + Sized
    {
        const ZERO: Self;
        const ONE: Self;
        fn exp(self) -> Self;
        fn ln(self) -> Self;
        fn sqrt(self) -> Self;
        fn powf(self, p: Self) -> Self;
        fn abs(self) -> Self;
        fn is_finite(self) -> bool;
        fn is_nan(self) -> bool;
        fn max(self, o: Self) -> Self;
        fn min(self, o: Self) -> Self;
    }

    macro_rules! impl_float {
        ($t:ty) => {
            impl Float for $t {
                const ZERO: Self = 0.0;
                const ONE: Self = 1.0;
                fn exp(self) -> Self {
                    <$t>::exp(self)
                }
                fn ln(self) -> Self {
                    <$t>::ln(self)
                }
                fn sqrt(self) -> Self {
                    <$t>::sqrt(self)
                }
                fn powf(self, p: Self) -> Self {
                    <$t>::powf(self, p)
                }
                fn abs(self) -> Self {
                    <$t>::abs(self)
                }
                fn is_finite(self) -> bool {
                    <$t>::is_finite(self)
                }
                fn is_nan(self) -> bool {
                    <$t>::is_nan(self)
                }
                fn max(self, o: Self) -> Self {
                    <$t>::max(self, o)
                }
                fn min(self, o: Self) -> Self {
                    <$t>::min(self, o)
                }
            }
        };
    }
    impl_float!(f32);
    impl_float!(f64);
}

fn strides(rows: usize, cols: usize, trans: bool) -> (isize, isize) {
    // Logical (rows × cols) matrix; stored transposed means the buffer is
    // cols × rows row-major.
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path, $pool:ident) => {
        thread_local! {
            static $pool: std::cell::RefCell<Vec<Vec<$t>>> = const { std::cell::RefCell::new(Vec::new()) };
        }

        impl Real for $t {
            fn take_scratch(len: usize) -> Vec<Self> {
                let mut buf = $pool.with(|p| p.borrow_mut().pop()).unwrap_or_default();
                buf.resize(len, 0.0);
                buf
            }
            fn give_scratch(buf: Vec<Self>) {
                $pool.with(|p| {
                    let mut p = p.borrow_mut();
                    if p.len() < 4 {
                        p.push(buf);
                    }
                });
            }
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_trans: bool,
                b: &[Self],
                b_trans: bool,
                c: &mut [Self],
                accumulate: bool,
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    if !accumulate {
                        c[..m * n].iter_mut().for_each(|v| *v = 0.0);
                    }
                    return;
                }
                let (rsa, csa) = strides(m, k, a_trans);
                let (rsb, csb) = strides(k, n, b_trans);
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: the asserts above guarantee every index the kernel
                // touches (bounded by m, k, n and the strides) is in range.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm, SCRATCH_F32);
impl_real!(f64, matrixmultiply::dgemm, SCRATCH_F64);
