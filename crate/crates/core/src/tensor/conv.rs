// Valid (unpadded) 1-D cross-correlation kernels. Lowered to GEMM through an
// im2col buffer per batch item.

/// `floor((len - kernel) / stride) + 1`, or `None` when `len < kernel`.
pub fn conv1d_output_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (len >= kernel && stride > 0).then(|| (len - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_len: usize,
}

impl ConvDims {
    fn rows(&self) -> usize {
        self.c_in * self.kernel
    }
}

fn im2col(x: &[f64], d: &ConvDims, cols: &mut [f64]) {
    for ci in 0..d.c_in {
        let xc = &x[ci * d.len..(ci + 1) * d.len];
        for j in 0..d.kernel {
            let row = &mut cols[(ci * d.kernel + j) * d.out_len..][..d.out_len];
            for (t, c) in row.iter_mut().enumerate() {
                *c = xc[t * d.stride + j];
            }
        }
    }
}

fn col2im_add(cols: &[f64], d: &ConvDims, dx: &mut [f64]) {
    for ci in 0..d.c_in {
        let dxc = &mut dx[ci * d.len..(ci + 1) * d.len];
        for j in 0..d.kernel {
            let row = &cols[(ci * d.kernel + j) * d.out_len..][..d.out_len];
            for (t, c) in row.iter().enumerate() {
                dxc[t * d.stride + j] += c;
            }
        }
    }
}

/// `c = alpha * a·b + beta * c` for row-major operands with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!(c.len() >= m * n);
    // SAFETY: the asserted extents keep every strided access inside the
    // slices, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn conv1d_forward(x: &[f64], w: &[f64], d: &ConvDims) -> Vec<f64> {
    let rows = d.rows();
    let mut cols = vec![0.0; rows * d.out_len];
    let mut out = vec![0.0; d.batch * d.c_out * d.out_len];
    for b in 0..d.batch {
        im2col(&x[b * d.c_in * d.len..][..d.c_in * d.len], d, &mut cols);
        let ob = &mut out[b * d.c_out * d.out_len..][..d.c_out * d.out_len];
        gemm(d.c_out, rows, d.out_len, w, (rows, 1), &cols, (d.out_len, 1), 0.0, ob);
    }
    out
}

/// Returns `(dx, dw)`; either side is skipped when not wanted.
pub(crate) fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    d: &ConvDims,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let rows = d.rows();
    let mut cols = vec![0.0; rows * d.out_len];
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    let mut dw = want_dw.then(|| vec![0.0; w.len()]);
    for b in 0..d.batch {
        let db = &dout[b * d.c_out * d.out_len..][..d.c_out * d.out_len];
        if let Some(dw) = dw.as_mut() {
            im2col(&x[b * d.c_in * d.len..][..d.c_in * d.len], d, &mut cols);
            // dW += dOut · colsᵀ
            gemm(d.c_out, d.out_len, rows, db, (d.out_len, 1), &cols, (1, d.out_len), 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            // dcols = Wᵀ · dOut
            gemm(rows, d.c_out, d.out_len, w, (1, rows), db, (d.out_len, 1), 0.0, &mut cols);
            col2im_add(&cols, d, &mut dx[b * d.c_in * d.len..][..d.c_in * d.len]);
        }
    }
    (dx, dw)
}

/// Direct-summation reference used by tests and by callers that want plain
/// values without a tape. `x` is `[c_in × len]`, `w` is `[c_out × c_in × kernel]`.
pub fn conv1d_values(
    x: &[f64],
    c_in: usize,
    w: &[f64],
    c_out: usize,
    kernel: usize,
    stride: usize,
) -> Option<Vec<f64>> {
    let len = x.len() / c_in;
    let out_len = conv1d_output_len(len, kernel, stride)?;
    let mut out = vec![0.0; c_out * out_len];
    for co in 0..c_out {
        for t in 0..out_len {
            let mut acc = 0.0;
            for ci in 0..c_in {
                for j in 0..kernel {
                    acc += w[(co * c_in + ci) * kernel + j] * x[ci * len + t * stride + j];
                }
            }
            out[co * out_len + t] = acc;
        }
    }
    Some(out)
}
