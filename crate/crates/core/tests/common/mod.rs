#![allow(dead_code)]

use std::sync::Arc;

use fracmgrit_core::assembly::{schur_complement, to_dense, OperatorSet};
use fracmgrit_core::mesh::{build_spatial_mesh, build_zmesh, default_z_intervals, DomainTag, SpatialMesh};
use fracmgrit_core::theory::{spectrum, ModeSpectrum};
use fracmgrit_core::timestepping::Propagator;

pub struct Setup {
    pub mesh: SpatialMesh,
    pub ops: Arc<OperatorSet>,
}

pub fn setup(level: u32, alpha: f64) -> Setup {
    let mesh = build_spatial_mesh(DomainTag::UnitSquare, level).unwrap();
    let z = build_zmesh(default_z_intervals(mesh.h), alpha, 1.0).unwrap();
    let ops = Arc::new(OperatorSet::new(&mesh, &z, alpha).unwrap());
    Setup { mesh, ops }
}

pub fn small_setup(level: u32, alpha: f64, z_intervals: usize) -> Setup {
    let mesh = build_spatial_mesh(DomainTag::UnitSquare, level).unwrap();
    let z = build_zmesh(z_intervals, alpha, 1.0).unwrap();
    let ops = Arc::new(OperatorSet::new(&mesh, &z, alpha).unwrap());
    Setup { mesh, ops }
}

impl Setup {
    pub fn spectrum(&self) -> ModeSpectrum {
        let q = schur_complement(&self.ops).unwrap();
        spectrum(&q, &to_dense(&self.ops.mass_raw)).unwrap()
    }

    pub fn trace_propagator(&self) -> Propagator {
        Propagator::trace_reduced(self.ops.clone()).unwrap()
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
