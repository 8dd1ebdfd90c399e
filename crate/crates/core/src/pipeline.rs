//! A localized problem bundling the model, window, `σ*`, `H` and cutoff,
//! with the streamed simulation → CF → density path used by the CLI and
//! the continuity scan.

use crate::bounds::{bound_lookbacks, bound_report_with, distinct_steps, remainder_profile_summaries, BoundReport};
use crate::charfn::{lamperti_samples, CfAccumulator, CharFnEstimate, FrequencyGrid};
use crate::cutoff::{make_bump, CutoffFunction};
use crate::error::{Error, Result};
use crate::invert::{invert, Coordinate, DensityEstimate};
use crate::lamperti::LampertiMap;
use crate::model::{
    build_sigma_star, drift_functional, CoefficientModel, DriftFunctional, LocalWindow, SigmaStar,
    WeakDerivative, DEFAULT_VALIDATION_POINTS,
};
use crate::numeric::{linspace, Summary};
use crate::simulate::{for_each_block, RecordPlan, SimConfig};

/// Default number of paths simulated per block.
pub const DEFAULT_BLOCK: usize = 1 << 16;

#[derive(Debug, Clone)]
pub struct LocalProblem {
    pub model: CoefficientModel,
    pub window: LocalWindow,
    pub sigma_star: SigmaStar,
    pub weak: WeakDerivative,
    pub drift_functional: DriftFunctional,
    pub lamperti: LampertiMap,
    pub cutoff: CutoffFunction,
}

impl LocalProblem {
    pub fn new(model: CoefficientModel, window: LocalWindow, cutoff: CutoffFunction) -> Result<Self> {
        window.validate(&model, DEFAULT_VALIDATION_POINTS)?;
        let r = window.delta - window.delta0;
        if cutoff.a < window.xi - r || cutoff.b > window.xi + r {
            return Err(Error::config(
                "cutoff",
                format!(
                    "support ({}, {}) is not inside the inner ball of radius {r} around {}",
                    cutoff.a, cutoff.b, window.xi
                ),
            ));
        }
        let sigma_star = build_sigma_star(&model.diffusion, &window)?;
        let weak = sigma_star.weak_derivative();
        let g = drift_functional(&model.drift, &sigma_star, &weak)?;
        let lamperti = LampertiMap::new(&sigma_star)?;
        Ok(LocalProblem {
            model,
            window,
            sigma_star,
            weak,
            drift_functional: g,
            lamperti,
            cutoff,
        })
    }

    pub fn with_bump(model: CoefficientModel, window: LocalWindow, shoulder_fraction: f64) -> Result<Self> {
        let cutoff = make_bump(&window, shoulder_fraction)?;
        Self::new(model, window, cutoff)
    }

    /// Support of the cutoff in the state coordinate.
    pub fn state_support(&self) -> (f64, f64) {
        self.cutoff.support()
    }

    /// `H(supp φ)`, ordered.
    pub fn lamperti_support(&self) -> Result<(f64, f64)> {
        let (a, b) = self.cutoff.support();
        let (ha, hb) = (self.lamperti.forward(a)?, self.lamperti.forward(b)?);
        Ok((ha.min(hb), ha.max(hb)))
    }

    pub fn state_grid(&self, n: usize) -> Vec<f64> {
        let (a, b) = self.state_support();
        linspace(a, b, n)
    }

    pub fn lamperti_grid(&self, n: usize) -> Result<Vec<f64>> {
        let (a, b) = self.lamperti_support()?;
        Ok(linspace(a, b, n))
    }

    /// Lamperti-coordinate CF estimates at each of `times`, from a single
    /// ensemble streamed in blocks of `block` paths.
    pub fn lamperti_cfs(
        &self,
        sim: &SimConfig,
        times: &[f64],
        grid: &FrequencyGrid,
        block: usize,
    ) -> Result<Vec<CharFnEstimate>> {
        let plan = RecordPlan::times(sim, times)?;
        let mut accs: Vec<CfAccumulator> = times.iter().map(|_| CfAccumulator::new(grid)).collect();
        for_each_block(&self.model, sim, &plan, block, |ens| {
            for (acc, &t) in accs.iter_mut().zip(times) {
                let (points, weights) = lamperti_samples(ens, &self.cutoff, &self.lamperti, t)?;
                acc.add(&points, &weights);
            }
            Ok(())
        })?;
        Ok(accs.iter().zip(times).map(|(a, &t)| a.finish(t)).collect())
    }

    pub fn lamperti_cf(&self, sim: &SimConfig, t: f64, grid: &FrequencyGrid) -> Result<CharFnEstimate> {
        Ok(self.lamperti_cfs(sim, &[t], grid, DEFAULT_BLOCK)?.remove(0))
    }

    /// `q_t(x) = p_t(H(x))/|σ*(x)|` on a state grid, with `p_t` inverted
    /// directly at the points `H(x)`.
    pub fn state_density(&self, cf: &CharFnEstimate, x_grid: &[f64]) -> Result<DensityEstimate> {
        let ys = x_grid
            .iter()
            .map(|&x| self.lamperti.forward(x))
            .collect::<Result<Vec<_>>>()?;
        let p = invert(cf, &ys)?;
        let values = x_grid
            .iter()
            .zip(&p.values)
            .map(|(&x, v)| v / self.sigma_star.value(x).abs())
            .collect();
        Ok(DensityEstimate {
            x_grid: x_grid.to_vec(),
            values,
            coordinate: Coordinate::State,
            ..p
        })
    }

    /// Lamperti CF at `t` and the refined bound report on
    /// `y_min < y ≤ y_max`, from one streamed ensemble. Only the trailing
    /// columns needed for the largest lookback are recorded.
    pub fn bound_report(
        &self,
        sim: &SimConfig,
        t: f64,
        grid: &FrequencyGrid,
        y_min: f64,
        y_max: f64,
        block: usize,
    ) -> Result<(CharFnEstimate, BoundReport)> {
        // Lookbacks depend only on the grid, not on the CF values.
        let probe = CharFnEstimate::analytic(grid, t, |_| num_complex::Complex64::new(0.0, 0.0));
        let picks = bound_lookbacks(&probe, y_min, y_max, sim.h)?;
        let ks = distinct_steps(&picks);
        let kmax = *ks.last().expect("non-empty lookbacks");
        let end = sim.step_of(t)?;
        if kmax > end {
            return Err(Error::config("bound.y_min", "lookback exceeds the simulated horizon"));
        }
        let plan = RecordPlan::steps(end - kmax..=end);
        let mut acc = CfAccumulator::new(grid);
        let mut rems = vec![Summary::new(); ks.len()];
        for_each_block(&self.model, sim, &plan, block, |ens| {
            let (points, weights) = lamperti_samples(ens, &self.cutoff, &self.lamperti, t)?;
            acc.add(&points, &weights);
            let part = remainder_profile_summaries(ens, &self.drift_functional, &self.window, t, &ks)?;
            for (r, p) in rems.iter_mut().zip(&part) {
                r.merge(p);
            }
            Ok(())
        })?;
        let cf = acc.finish(t);
        let rem_values: Vec<f64> = rems.iter().map(|s| s.mean()).collect();
        let report = bound_report_with(&cf, &picks, &ks, &rem_values, sim.h)?;
        Ok((cf, report))
    }
}
