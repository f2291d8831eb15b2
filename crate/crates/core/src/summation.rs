//! Kahan-compensated accumulators. Every weighted sum in the estimators goes
//! through these, always in ascending sample order.

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Element-wise compensated accumulator over a fixed-length buffer.
#[derive(Debug, Clone)]
pub(crate) struct KahanVec {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl KahanVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            comp: vec![0.0; len],
        }
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, x: f64) {
        let y = x - self.comp[i];
        let t = self.sum[i] + y;
        self.comp[i] = (t - self.sum[i]) - y;
        self.sum[i] = t;
    }

    pub fn add_scaled(&mut self, scale: f64, v: &[f64]) {
        for (i, &x) in v.iter().enumerate() {
            self.add_at(i, scale * x);
        }
    }

    /// Adds `scale * v vᵀ` to a row-major `d×d` buffer (upper triangle only;
    /// call [`KahanVec::into_symmetric`] to mirror).
    pub fn add_outer_upper(&mut self, scale: f64, v: &[f64]) {
        let d = v.len();
        for i in 0..d {
            let si = scale * v[i];
            for j in i..d {
                self.add_at(i * d + j, si * v[j]);
            }
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.sum
    }

    pub fn into_symmetric(self, d: usize) -> Vec<f64> {
        let mut m = self.sum;
        for i in 0..d {
            for j in 0..i {
                m[i * d + j] = m[j * d + i];
            }
        }
        m
    }
}

pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut k = Kahan::default();
    for x in it {
        k.add(x);
    }
    k.value()
}
