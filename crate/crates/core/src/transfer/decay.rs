use serde::{Deserialize, Serialize};

use crate::environment::{EnvironmentPath, RandomMatrixFamily};
use crate::error::Result;
use crate::measures::{all_words, check_enumeration, cylinder_mass, joint_mass, FibreMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub g: usize,
    pub psi: f64,
}

/// `psi_hat(g) = max |mu(A ∩ sigma^{-g-n} B) - mu(A) mu_{theta^{n+g}}(B)| /
/// (mu(A) mu_{theta^{n+g}}(B))` over `n`-cylinders `A`, `m`-cylinders `B` and
/// the given offsets.
pub fn decay_profile<F: FibreMeasure + ?Sized>(
    fm: &F,
    offsets: &[isize],
    n: usize,
    m: usize,
    gaps: &[usize],
) -> Result<Vec<DecayPoint>> {
    let alphabet = fm.alphabet();
    check_enumeration(alphabet, n + m)?;
    let mut out = Vec::with_capacity(gaps.len());
    for &g in gaps {
        let mut psi: f64 = 0.0;
        for &s in offsets {
            for a in all_words(alphabet, n) {
                let ma = cylinder_mass(fm, s, &a)?;
                if ma == 0.0 {
                    continue;
                }
                for b in all_words(alphabet, m) {
                    let mb = cylinder_mass(fm, s + (n + g) as isize, &b)?;
                    if mb == 0.0 {
                        continue;
                    }
                    let joint = joint_mass(fm, s, &[(0, &a), (n + g, &b)])?;
                    let indep = ma * mb;
                    psi = psi.max((joint - indep).abs() / indep);
                }
            }
        }
        out.push(DecayPoint { g, psi });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigImages {
    /// `min mu_{theta^n omega}(sigma^n U)` over positive-mass `n`-cylinders `U`.
    pub min_image_mass: f64,
    /// `1 / min_image_mass`.
    pub constant: f64,
}

/// Big-images audit: the images `sigma^n U` of `n`-cylinders are the sets of
/// points that may follow the last symbol of `U`.
pub fn big_images<F: FibreMeasure + ?Sized>(
    fm: &F,
    family: &RandomMatrixFamily,
    path: &EnvironmentPath,
    offsets: &[isize],
    n: usize,
) -> Result<BigImages> {
    let alphabet = fm.alphabet();
    check_enumeration(alphabet, n)?;
    let mut min = f64::INFINITY;
    for &s in offsets {
        for u in all_words(alphabet, n) {
            if cylinder_mass(fm, s, &u)? == 0.0 {
                continue;
            }
            let last = *u.last().unwrap_or(&0);
            let matrix = family.matrix(path.get(s + n as isize - 1)?);
            let mut image = 0.0;
            for b in 0..alphabet as u8 {
                if n == 0 || matrix.allows(last, b) {
                    image += cylinder_mass(fm, s + n as isize, &[b])?;
                }
            }
            min = min.min(image);
        }
    }
    Ok(BigImages { min_image_mass: min, constant: 1.0 / min })
}
