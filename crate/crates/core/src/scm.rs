//! Spatial covariance matrices and small Hermitian eigenproblems.
//!
//! The expectation `E[X X^H]` is approximated by averaging outer products over
//! a clipped `(2 tr + 1) × (2 fr + 1)` time-frequency neighbourhood. The
//! eigensolver is a cyclic complex Jacobi method, exact to round-off for the
//! M ≤ 8 matrices this crate deals with.

use std::ops::Range;

use ndarray::{Array4, ArrayView2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

/// Largest channel count handled by the fixed-size eigen buffers.
pub const MAX_CHANNELS: usize = 8;

const HERMITIAN_TOL: f64 = 1e-6;
const MAX_SWEEPS: usize = 64;

/// SCMs over a contiguous band of frequency bins, laid out T × F × M × M.
#[derive(Debug, Clone)]
pub struct ScmField {
    pub scms: Array4<Complex64>,
    /// Spectrogram bin index of `scms[.., 0, .., ..]`.
    pub first_bin: usize,
    pub time_radius: usize,
    pub freq_radius: usize,
}

impl ScmField {
    pub fn n_channels(&self) -> usize {
        self.scms.shape()[2]
    }

    pub fn n_frames(&self) -> usize {
        self.scms.shape()[0]
    }

    pub fn bins(&self) -> Range<usize> {
        self.first_bin..self.first_bin + self.scms.shape()[1]
    }

    /// SCM at frame `t` and spectrogram bin `bin`.
    pub fn at(&self, t: usize, bin: usize) -> ArrayView2<'_, Complex64> {
        self.scms
            .index_axis(Axis(0), t)
            .index_axis_move(Axis(0), bin - self.first_bin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigPair {
    pub value: f64,
    pub vector: Vec<Complex64>,
}

/// SCM field over every bin of `spec`.
pub fn estimate_scm(spec: &ComplexSpectrogram, time_radius: usize, freq_radius: usize) -> Result<ScmField> {
    estimate_scm_band(spec, time_radius, freq_radius, 0..spec.n_bins())
}

/// SCM field restricted to `bins`. Neighbourhoods still draw on bins outside
/// the band when they exist in the spectrogram.
pub fn estimate_scm_band(
    spec: &ComplexSpectrogram,
    time_radius: usize,
    freq_radius: usize,
    bins: Range<usize>,
) -> Result<ScmField> {
    let m = spec.n_channels();
    if m < 2 {
        return Err(Error::TooFewChannels { needed: 2, actual: m });
    }
    let n_t = spec.n_frames();
    let n_f = spec.n_bins();
    if bins.start > bins.end || bins.end > n_f {
        return Err(Error::ShapeMismatch(format!(
            "bin range {bins:?} outside spectrogram with {n_f} bins"
        )));
    }
    let n_b = bins.len();
    let mut scms = Array4::<Complex64>::zeros((n_t, n_b, m, m));
    let data = &spec.data;
    scms.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(t, mut frame)| {
            let t_lo = t.saturating_sub(time_radius);
            let t_hi = (t + time_radius).min(n_t - 1);
            let mut x = [Complex64::default(); MAX_CHANNELS];
            for (j, mut r) in frame.axis_iter_mut(Axis(0)).enumerate() {
                let f = bins.start + j;
                let f_lo = f.saturating_sub(freq_radius);
                let f_hi = (f + freq_radius).min(n_f - 1);
                let count = ((t_hi - t_lo + 1) * (f_hi - f_lo + 1)) as f64;
                let mut acc = [Complex64::default(); MAX_CHANNELS * MAX_CHANNELS];
                for tt in t_lo..=t_hi {
                    for ff in f_lo..=f_hi {
                        for (c, slot) in x.iter_mut().take(m).enumerate() {
                            *slot = data[[c, tt, ff]];
                        }
                        for a in 0..m {
                            for b in a..m {
                                acc[a * m + b] += x[a] * x[b].conj();
                            }
                        }
                    }
                }
                for a in 0..m {
                    r[[a, a]] = Complex64::new(acc[a * m + a].re / count, 0.0);
                    for b in a + 1..m {
                        let v = acc[a * m + b] / count;
                        r[[a, b]] = v;
                        r[[b, a]] = v.conj();
                    }
                }
            }
        });
    Ok(ScmField {
        scms,
        first_bin: bins.start,
        time_radius,
        freq_radius,
    })
}

fn check_square(r: &ArrayView2<'_, Complex64>) -> Result<usize> {
    let (rows, cols) = r.dim();
    if rows != cols || rows == 0 || rows > MAX_CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "expected square matrix of order 1..={MAX_CHANNELS}, got {rows}×{cols}"
        )));
    }
    Ok(rows)
}

fn check_hermitian(r: &ArrayView2<'_, Complex64>) -> Result<()> {
    let m = r.nrows();
    let scale = r.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut deviation: f64 = 0.0;
    for a in 0..m {
        for b in a..m {
            deviation = deviation.max((r[[a, b]] - r[[b, a]].conj()).norm());
        }
    }
    if deviation > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

fn load(r: &ArrayView2<'_, Complex64>, m: usize) -> [Complex64; MAX_CHANNELS * MAX_CHANNELS] {
    let mut a = [Complex64::default(); MAX_CHANNELS * MAX_CHANNELS];
    for i in 0..m {
        for j in 0..m {
            // Symmetrise so the solver sees an exactly Hermitian matrix.
            a[i * m + j] = if i == j {
                Complex64::new(r[[i, i]].re, 0.0)
            } else {
                (r[[i, j]] + r[[j, i]].conj()) * 0.5
            };
        }
    }
    a
}

/// Full eigendecomposition of a Hermitian `m × m` matrix stored row-major in
/// `a`. On return the diagonal of `a` holds the eigenvalues and column `k` of
/// `v` the matching unit eigenvector.
pub(crate) fn jacobi_eigen(a: &mut [Complex64], v: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in 0..m {
            v[i * m + j] = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            };
        }
    }
    if m == 1 {
        return;
    }
    let frob: f64 = a[..m * m].iter().map(|x| x.norm_sqr()).sum();
    if frob == 0.0 {
        return;
    }
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..m {
            for q in p + 1..m {
                off += a[p * m + q].norm_sqr();
            }
        }
        if off <= 1e-32 * frob {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let app = a[p * m + p].re;
                let aqq = a[q * m + q].re;
                // Unit phase that makes the (p, q) element real, followed by a
                // real Givens rotation that annihilates it.
                let phase = apq / r;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let jpp = Complex64::new(c, 0.0);
                let jpq = Complex64::new(s, 0.0);
                let jqp = -phase.conj() * s;
                let jqq = phase.conj() * c;
                // A <- A J
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = akp * jpp + akq * jqp;
                    a[k * m + q] = akp * jpq + akq * jqq;
                }
                // A <- J^H A
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = jpp.conj() * apk + jqp.conj() * aqk;
                    a[q * m + k] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                a[p * m + q] = Complex64::default();
                a[q * m + p] = Complex64::default();
                a[p * m + p].im = 0.0;
                a[q * m + q].im = 0.0;
                // V <- V J
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = vkp * jpp + vkq * jqp;
                    v[k * m + q] = vkp * jpq + vkq * jqq;
                }
            }
        }
    }
}

/// Largest eigenvalue and its eigenvector, without input validation. `out`
/// receives the vector; the eigenvalue and the trace are returned.
pub(crate) fn principal_unchecked(a: &mut [Complex64], m: usize, out: &mut [Complex64]) -> (f64, f64) {
    let trace: f64 = (0..m).map(|i| a[i * m + i].re).sum();
    let mut v = [Complex64::default(); MAX_CHANNELS * MAX_CHANNELS];
    jacobi_eigen(a, &mut v, m);
    let mut best = 0;
    for i in 1..m {
        if a[i * m + i].re > a[best * m + best].re {
            best = i;
        }
    }
    for (k, slot) in out.iter_mut().take(m).enumerate() {
        *slot = v[k * m + best];
    }
    (a[best * m + best].re, trace)
}

pub fn principal_eigenvector(r: ArrayView2<'_, Complex64>) -> Result<EigPair> {
    let m = check_square(&r)?;
    check_hermitian(&r)?;
    let mut a = load(&r, m);
    let mut u = [Complex64::default(); MAX_CHANNELS];
    let (value, _) = principal_unchecked(&mut a, m, &mut u);
    Ok(EigPair {
        value,
        vector: u[..m].to_vec(),
    })
}

/// All eigenvalues in descending order.
pub fn eigenvalues(r: ArrayView2<'_, Complex64>) -> Result<Vec<f64>> {
    let m = check_square(&r)?;
    check_hermitian(&r)?;
    let mut a = load(&r, m);
    let mut v = [Complex64::default(); MAX_CHANNELS * MAX_CHANNELS];
    jacobi_eigen(&mut a, &mut v, m);
    let mut values: Vec<f64> = (0..m).map(|i| a[i * m + i].re).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

/// Ratio of the principal eigenvalue to the trace; 1 for rank-one matrices,
/// `1/M` for a scaled identity.
pub fn coherence(r: ArrayView2<'_, Complex64>) -> Result<f64> {
    let m = check_square(&r)?;
    check_hermitian(&r)?;
    let trace: f64 = (0..m).map(|i| r[[i, i]].re).sum();
    if trace.is_nan() || trace <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    let mut a = load(&r, m);
    let mut u = [Complex64::default(); MAX_CHANNELS];
    let (value, _) = principal_unchecked(&mut a, m, &mut u);
    Ok(value / trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;
    use ndarray::{Array2, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_psd(rng: &mut ChaCha8Rng, m: usize) -> Array2<Complex64> {
        let b = Array2::from_shape_fn((m, m), |_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let mut r = Array2::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                r[[i, j]] = (0..m).map(|k| b[[i, k]] * b[[j, k]].conj()).sum();
            }
        }
        r
    }

    fn residual(r: &Array2<Complex64>, pair: &EigPair) -> f64 {
        let m = r.nrows();
        (0..m)
            .map(|i| {
                let ru: Complex64 = (0..m).map(|j| r[[i, j]] * pair.vector[j]).sum();
                (ru - pair.vector[i] * pair.value).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    fn random_spec(m: usize, t: usize, f: usize, seed: u64) -> ComplexSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexSpectrogram {
            data: Array3::from_shape_fn((m, t, f), |_| {
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }),
            config: StftConfig::default(),
        }
    }

    #[test]
    fn identity_has_unit_principal_value() {
        let r = Array2::from_diag(&ndarray::arr1(&[c(1.0, 0.0); 4]));
        let pair = principal_eigenvector(r.view()).unwrap();
        assert!((pair.value - 1.0).abs() < 1e-12);
        assert!(residual(&r, &pair) < 1e-12);
        assert!((coherence(r.view()).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rank_one_recovers_vector_up_to_phase() {
        let raw = [c(0.3, 0.1), c(-0.5, 0.7), c(0.2, -0.4), c(0.6, 0.0)];
        let norm = raw.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let v: Vec<Complex64> = raw.iter().map(|x| x / norm).collect();
        let r = Array2::from_shape_fn((4, 4), |(i, j)| v[i] * v[j].conj());
        let pair = principal_eigenvector(r.view()).unwrap();
        assert!((pair.value - 1.0).abs() < 1e-12);
        let overlap: Complex64 = pair.vector.iter().zip(&v).map(|(u, v)| u.conj() * v).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-9);
        assert!((coherence(r.view()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_coherence() {
        let r = Array2::from_diag(&ndarray::arr1(&[c(3.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]));
        assert!((coherence(r.view()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_sum_to_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in 2..=MAX_CHANNELS {
            let r = random_psd(&mut rng, m);
            let values = eigenvalues(r.view()).unwrap();
            let trace: f64 = (0..m).map(|i| r[[i, i]].re).sum();
            assert!((values.iter().sum::<f64>() - trace).abs() < 1e-10 * trace);
            assert!(values.windows(2).all(|w| w[0] >= w[1]));
            let pair = principal_eigenvector(r.view()).unwrap();
            assert!(residual(&r, &pair) <= 1e-9 * trace);
        }
    }

    #[test]
    fn errors() {
        let mut r = Array2::from_diag(&ndarray::arr1(&[c(1.0, 0.0); 3]));
        r[[0, 1]] = c(0.5, 0.0);
        assert!(matches!(
            principal_eigenvector(r.view()),
            Err(Error::NotHermitian { .. })
        ));
        let z = Array2::<Complex64>::zeros((3, 3));
        assert!(matches!(coherence(z.view()), Err(Error::ZeroTrace)));
        let spec = random_spec(1, 4, 4, 0);
        assert!(matches!(estimate_scm(&spec, 1, 1), Err(Error::TooFewChannels { .. })));
    }

    #[test]
    fn constant_neighbourhood_gives_rank_one() {
        let v = [c(1.0, 0.5), c(-0.2, 0.3), c(0.0, -1.0), c(0.7, 0.7)];
        let spec = ComplexSpectrogram {
            data: Array3::from_shape_fn((4, 5, 6), |(m, _, _)| v[m]),
            config: StftConfig::default(),
        };
        let field = estimate_scm(&spec, 1, 1).unwrap();
        for t in 0..5 {
            for f in 0..6 {
                let r = field.at(t, f);
                for i in 0..4 {
                    for j in 0..4 {
                        assert!((r[[i, j]] - v[i] * v[j].conj()).norm() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_radius_is_outer_product() {
        let spec = random_spec(3, 4, 5, 1);
        let field = estimate_scm(&spec, 0, 0).unwrap();
        for t in 0..4 {
            for f in 0..5 {
                let r = field.at(t, f);
                let energy: f64 = (0..3).map(|m| spec.data[[m, t, f]].norm_sqr()).sum();
                let trace: f64 = (0..3).map(|i| r[[i, i]].re).sum();
                assert!((trace - energy).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_naive_neighbourhood_average() {
        let spec = random_spec(4, 7, 9, 2);
        let field = estimate_scm(&spec, 1, 1).unwrap();
        let band = estimate_scm_band(&spec, 1, 1, 3..6).unwrap();
        for t in 0..7i64 {
            for f in 0..9i64 {
                let mut sum = Array2::<Complex64>::zeros((4, 4));
                let mut n = 0.0;
                for dt in -1..=1 {
                    for df in -1..=1 {
                        let (tt, ff) = (t + dt, f + df);
                        if !(0..7).contains(&tt) || !(0..9).contains(&ff) {
                            continue;
                        }
                        n += 1.0;
                        for i in 0..4 {
                            for j in 0..4 {
                                sum[[i, j]] += spec.data[[i, tt as usize, ff as usize]]
                                    * spec.data[[j, tt as usize, ff as usize]].conj();
                            }
                        }
                    }
                }
                let got = field.at(t as usize, f as usize);
                for i in 0..4 {
                    for j in 0..4 {
                        assert!((got[[i, j]] - sum[[i, j]] / n).norm() < 1e-7);
                        if (3..6).contains(&(f as usize)) {
                            let b = band.at(t as usize, f as usize);
                            assert!((b[[i, j]] - got[[i, j]]).norm() < 1e-14);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn scm_is_permutation_equivariant() {
        let spec = random_spec(4, 5, 5, 3);
        let perm = [2, 0, 3, 1];
        let permuted = ComplexSpectrogram {
            data: Array3::from_shape_fn((4, 5, 5), |(m, t, f)| spec.data[[perm[m], t, f]]),
            config: spec.config.clone(),
        };
        let a = estimate_scm(&spec, 1, 1).unwrap();
        let b = estimate_scm(&permuted, 1, 1).unwrap();
        for t in 0..5 {
            for f in 0..5 {
                for i in 0..4 {
                    for j in 0..4 {
                        let x = b.at(t, f)[[i, j]];
                        let y = a.at(t, f)[[perm[i], perm[j]]];
                        assert!((x - y).norm() < 1e-14);
                    }
                }
            }
        }
    }
}
