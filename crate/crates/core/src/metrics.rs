//! Image quality metrics on `[0, 1]` rasters.

use crate::error::{CoreError, Result};
use crate::raster::Raster;

pub fn mse<const N: usize>(a: &Raster<N>, b: &Raster<N>) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(CoreError::Shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = (*x - *y) as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB for unit peak; `inf` for identical inputs.
pub fn psnr<const N: usize>(a: &Raster<N>, b: &Raster<N>) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Mean SSIM over channels with an 11x11 Gaussian window (sigma 1.5),
/// evaluated at every position where the window fits.
pub fn ssim<const N: usize>(a: &Raster<N>, b: &Raster<N>) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(CoreError::Shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    let (w, h) = a.dims();
    let radius = 5usize.min((w.min(h) - 1) / 2);
    let size = 2 * radius + 1;
    let weights: Vec<f64> = {
        let g: Vec<f64> = (0..size)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-d * d / (2.0 * 1.5 * 1.5)).exp()
            })
            .collect();
        let mut w2: Vec<f64> = g.iter().flat_map(|x| g.iter().map(move |y| x * y)).collect();
        let total: f64 = w2.iter().sum();
        w2.iter_mut().for_each(|v| *v /= total);
        w2
    };
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..N {
        for y in 0..=(h - size) {
            for x in 0..=(w - size) {
                let (mut ma, mut mb, mut va, mut vb, mut cov) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..size {
                    for i in 0..size {
                        let wt = weights[j * size + i];
                        let pa = a.pixel(x + i, y + j)[c] as f64;
                        let pb = b.pixel(x + i, y + j)[c] as f64;
                        ma += wt * pa;
                        mb += wt * pb;
                        va += wt * pa * pa;
                        vb += wt * pb * pb;
                        cov += wt * pa * pb;
                    }
                }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
