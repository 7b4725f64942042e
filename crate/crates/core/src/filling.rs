//! Filling of the gap states by pairs created from the Dirac sea, measured
//! while the fields are on.
//!
//! For a gap state `g` of the static well the filling at plateau time T is
//! `Σ_c |⟨g|U(T)|c⟩|²` summed over the whole free negative-energy set, where
//! `U(T)` runs from the start of the ramp. It equals `‖P₋ U(T)† g‖²`, so one
//! backward evolution of `g` replaces the forward evolution of the whole sea.
//! On the plateau the Hamiltonian repeats every laser period `P`; for `T = mP`
//! the plateau part of `U(T)†` is the `m`-th power of a single period, so all
//! sample times come from one backward sweep plus one ramp per sample.
//!
//! Emitted waves must not wrap around the box within the covered time, which
//! makes a large box necessary. The gap states are computed on a small box of
//! the same spacing and embedded.

use num_complex::Complex64;
use rayon::ThreadPool;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::FieldConfig;
use crate::grid::Grid;
use crate::observables::FreeBasis;
use crate::propagator::{Propagator, Schedule, SpinorField};

/// Filling of each tracked gap state at the sampled plateau lengths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FillingSeries {
    pub energies: Vec<f64>,
    pub times: Vec<f64>,
    /// `filling[i][s]`: state `s` at `times[i]`.
    pub filling: Vec<Vec<f64>>,
}

impl FillingSeries {
    pub fn state(&self, s: usize) -> Vec<f64> {
        self.filling.iter().map(|row| row[s]).collect()
    }

    pub fn total(&self) -> Vec<f64> {
        self.filling.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Places a state computed on `small` at the center of `big`; both grids must share the spacing.
pub fn embed(psi: &[Complex64], small: &Grid, big: &Grid) -> Result<SpinorField> {
    let (ns, nb) = (small.len(), big.len());
    if psi.len() != 2 * ns {
        return Err(Error::Invariant(format!("state of length {} on a {ns}-point grid", psi.len())));
    }
    if (small.dx() - big.dx()).abs() > 1e-12 * big.dx() || ns > nb {
        return Err(Error::Config(format!("cannot embed grid [{small}] into [{big}]")));
    }
    let off = (nb - ns) / 2;
    let mut data = vec![Complex64::default(); 2 * nb];
    data[off..off + ns].copy_from_slice(&psi[..ns]);
    data[nb + off..nb + off + ns].copy_from_slice(&psi[ns..]);
    Ok(SpinorField::from_vec(data))
}

/// Step that divides the laser half period, at most `dt_max`.
pub fn locked_step(fields: &FieldConfig, dt_max: f64) -> Result<f64> {
    let h = fields.half_period().ok_or(Error::LaserOff)?;
    Ok(h / (h / dt_max - 1e-9).ceil().max(1.0))
}

fn span_schedule(t_from: f64, t_to: f64, dt: f64) -> Result<Schedule> {
    let span = (t_from - t_to).abs();
    let steps = span / dt;
    if (steps - steps.round()).abs() < 1e-6 {
        let s = Schedule::with_steps(t_to, dt, steps.round() as usize, &[])?;
        if t_from > t_to {
            return Schedule::backward(t_from, t_to, s.dt());
        }
        return Ok(s);
    }
    if t_from > t_to {
        Schedule::backward(t_from, t_to, dt)
    } else {
        Schedule::new(t_from, t_to, dt, &[])
    }
}

/// Plateau and ramp segments of the adjoint evolution.
struct Segments {
    period: (Propagator, Schedule),
    on: (Propagator, Schedule),
}

fn segments(grid: &Grid, fields: &FieldConfig, dt_max: f64) -> Result<Segments> {
    let dt = locked_step(fields, dt_max)?;
    let p = 2.0 * fields.half_period().ok_or(Error::LaserOff)?;
    // one period of plateau stands in for any whole number of periods
    let cfg = fields.with_plateau(p);
    let build = |from: f64, to: f64| -> Result<(Propagator, Schedule)> {
        let s = span_schedule(from, to, dt)?;
        Ok((Propagator::new(grid, &cfg, s.dt())?, s))
    };
    Ok(Segments {
        period: build(p, 0.0)?,
        on: build(0.0, cfg.t_start())?,
    })
}

fn sea_weight(basis: &FreeBasis, psi: &SpinorField) -> f64 {
    basis.project(psi).1.iter().map(|c| c.norm_sqr()).sum()
}

/// Filling of `states` for plateaus `T = m P`, `m = 0, every, 2 every, …, periods`.
pub fn gap_filling(
    grid: &Grid,
    fields: &FieldConfig,
    energies: &[f64],
    states: Vec<SpinorField>,
    periods: usize,
    every: usize,
    dt_max: f64,
    pool: Option<&ThreadPool>,
) -> Result<FillingSeries> {
    if every == 0 {
        return Err(Error::BadSchedule("sample spacing must be at least one period".into()));
    }
    let seg = segments(grid, fields, dt_max)?;
    let basis = FreeBasis::new(grid);
    let period = 2.0 * fields.half_period().ok_or(Error::LaserOff)?;
    let mut current = states;
    let mut series = FillingSeries { energies: energies.to_vec(), times: vec![], filling: vec![] };
    for m in 0..=periods {
        if m > 0 {
            seg.period.0.evolve(&mut current, &seg.period.1, pool, |_| Ok(()))?;
        }
        if m % every == 0 {
            let mut branch = current.clone();
            seg.on.0.evolve(&mut branch, &seg.on.1, pool, |_| Ok(()))?;
            series.times.push(m as f64 * period);
            series.filling.push(branch.iter().map(|s| sea_weight(&basis, s)).collect());
        }
    }
    Ok(series)
}
