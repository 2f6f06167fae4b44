//! A closed set of sample-measure models, used where the model kind is only
//! known at run time.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::environment::{BaseSystem, EnvironmentPath};
use crate::error::Result;
use crate::measures::{Context, FibreMeasure, ProductFibre, RandomProductMeasure, SampleMeasureModel};
use crate::rng::TrialRng;
use crate::transfer::{GibbsFibre, GibbsModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureModel {
    Product(RandomProductMeasure),
    Gibbs(GibbsModel),
}

impl MeasureModel {
    pub fn is_deterministic(&self) -> bool {
        self.base().is_trivial()
    }
}

impl From<RandomProductMeasure> for MeasureModel {
    fn from(m: RandomProductMeasure) -> Self {
        MeasureModel::Product(m)
    }
}

impl From<GibbsModel> for MeasureModel {
    fn from(m: GibbsModel) -> Self {
        MeasureModel::Gibbs(m)
    }
}

#[derive(Debug, Clone)]
pub enum AnyFibre {
    Product(ProductFibre),
    Gibbs(GibbsFibre),
}

impl SampleMeasureModel for MeasureModel {
    type Fibre = AnyFibre;

    fn alphabet(&self) -> usize {
        match self {
            MeasureModel::Product(m) => m.alphabet(),
            MeasureModel::Gibbs(m) => m.alphabet(),
        }
    }

    fn base(&self) -> &BaseSystem {
        match self {
            MeasureModel::Product(m) => m.base(),
            MeasureModel::Gibbs(m) => m.base(),
        }
    }

    fn margin(&self) -> (usize, usize) {
        match self {
            MeasureModel::Product(m) => m.margin(),
            MeasureModel::Gibbs(m) => m.margin(),
        }
    }

    fn realize(&self, path: &EnvironmentPath, positions: Range<isize>) -> Result<AnyFibre> {
        Ok(match self {
            MeasureModel::Product(m) => AnyFibre::Product(m.realize(path, positions)?),
            MeasureModel::Gibbs(m) => AnyFibre::Gibbs(m.realize(path, positions)?),
        })
    }

    fn exact_marginal(&self, w: &[u8], cap: usize) -> Result<f64> {
        match self {
            MeasureModel::Product(m) => m.exact_marginal(w, cap),
            MeasureModel::Gibbs(m) => m.exact_marginal(w, cap),
        }
    }
}

macro_rules! dispatch {
    ($self:ident, $f:ident => $e:expr) => {
        match $self {
            AnyFibre::Product($f) => $e,
            AnyFibre::Gibbs($f) => $e,
        }
    };
}

impl FibreMeasure for AnyFibre {
    fn alphabet(&self) -> usize {
        dispatch!(self, f => f.alphabet())
    }

    fn memory(&self) -> usize {
        dispatch!(self, f => f.memory())
    }

    fn positions(&self) -> Range<isize> {
        dispatch!(self, f => f.positions())
    }

    fn log_cylinder_mass(&self, offset: isize, w: &[u8]) -> Result<f64> {
        dispatch!(self, f => f.log_cylinder_mass(offset, w))
    }

    fn conditional(&self, offset: isize, k: usize, context: &[u8], out: &mut [f64]) -> Result<()> {
        dispatch!(self, f => f.conditional(offset, k, context, out))
    }

    fn fill(&self, offset: isize, k: usize, context: &mut Context, rng: &mut TrialRng, out: &mut [u8]) -> Result<()> {
        dispatch!(self, f => f.fill(offset, k, context, rng, out))
    }

    #[inline]
    fn draw(&self, offset: isize, k: usize, context: &[u8], rng: &mut TrialRng) -> Result<u8> {
        dispatch!(self, f => f.draw(offset, k, context, rng))
    }
}
