//! Admittance assembly, generator internal nodes and Kron reduction.
//!
//! Node ordering of the augmented network is fixed: all buses in case order,
//! then one internal node per in-service generator in case order. Generator
//! `i` is always dynamic node `i` of the resulting [`SwingModel`].

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
// Float math for no_std; shadowed by inherent methods when std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::case::PowerCase;
use crate::error::NetworkError;
use crate::linalg::schur_complement;

/// Reductions whose pivots spread this far apart are treated as singular.
const MIN_PIVOT_RATIO: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeLabel {
    Bus(u32),
    /// Internal EMF node of generator `gen` (index into `case.gens`).
    Internal { gen: usize, bus: u32 },
}

#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    pub y: DMatrix<Complex64>,
    pub node_ids: Vec<NodeLabel>,
}

impl AdmittanceMatrix {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    /// Largest `|y_ij - y_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.y[(i, j)] - self.y[(j, i)]).norm());
            }
        }
        worst
    }
}

/// Per-generator dynamic data plus the synthetic parameters given to load
/// nodes in the synchronous-motor model.
#[derive(Debug, Clone, PartialEq)]
pub struct GenDynamicParams {
    /// Inertia constant (s, machine base).
    pub h: Vec<f64>,
    /// Damping (p.u. torque per p.u. speed, system base).
    pub d: Vec<f64>,
    /// Transient reactance (p.u., machine base).
    pub xdp: Vec<f64>,
    pub f_nominal: f64,
    pub h_load: f64,
    pub d_load: f64,
}

impl GenDynamicParams {
    pub const H_DEFAULT: f64 = 4.0;
    pub const D_DEFAULT: f64 = 0.05;
    pub const XDP_DEFAULT: f64 = 0.15;
    pub const H_LOAD_DEFAULT: f64 = 0.5;
    pub const D_LOAD_DEFAULT: f64 = 0.1;

    pub fn uniform(n_gens: usize, h: f64, d: f64, xdp: f64, f_nominal: f64) -> Self {
        GenDynamicParams {
            h: vec![h; n_gens],
            d: vec![d; n_gens],
            xdp: vec![xdp; n_gens],
            f_nominal,
            h_load: Self::H_LOAD_DEFAULT,
            d_load: Self::D_LOAD_DEFAULT,
        }
    }

    /// Textbook defaults; 50 Hz for the Polish system, 60 Hz otherwise.
    pub fn defaults_for(case: &PowerCase) -> Self {
        let f = if is_polish(&case.name) { 50.0 } else { 60.0 };
        Self::uniform(case.gens.len(), Self::H_DEFAULT, Self::D_DEFAULT, Self::XDP_DEFAULT, f)
    }

    pub fn omega_r(&self) -> f64 {
        2.0 * PI * self.f_nominal
    }

    pub fn check(&self, n_gens: usize) -> Result<(), NetworkError> {
        for len in [self.h.len(), self.d.len(), self.xdp.len()] {
            if len != n_gens {
                return Err(NetworkError::ParamCount { expected: n_gens, found: len });
            }
        }
        for i in 0..n_gens {
            if !(self.h[i] > 0.0 && self.h[i].is_finite()) {
                return Err(NetworkError::InvalidParam { name: "h", index: i });
            }
            if !(self.d[i] >= 0.0 && self.d[i].is_finite()) {
                return Err(NetworkError::InvalidParam { name: "d", index: i });
            }
            if !(self.xdp[i] > 0.0 && self.xdp[i].is_finite()) {
                return Err(NetworkError::InvalidParam { name: "xdp", index: i });
            }
        }
        if !(self.f_nominal > 0.0 && self.f_nominal.is_finite()) {
            return Err(NetworkError::InvalidParam { name: "f_nominal", index: 0 });
        }
        if !(self.h_load > 0.0) || !(self.d_load >= 0.0) {
            return Err(NetworkError::InvalidParam { name: "load dynamics", index: 0 });
        }
        Ok(())
    }
}

pub(crate) fn is_polish(name: &str) -> bool {
    name.contains("2736") || name.contains("2737") || name.contains("2383") || name.contains("2746")
}

/// Modifications applied on top of the base case when a disturbance is
/// active. Internal EMFs always come from the undisturbed operating point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkEdits {
    /// Extra shunt admittance (p.u.) at a bus.
    pub shunts: Vec<(u32, Complex64)>,
    /// Indices into `case.branches` left out of the assembly.
    pub removed_branches: Vec<usize>,
    /// Generators whose mechanical power is set to zero.
    pub zeroed_gens: Vec<usize>,
}

impl NetworkEdits {
    pub fn is_empty(&self) -> bool {
        self.shunts.is_empty() && self.removed_branches.is_empty() && self.zeroed_gens.is_empty()
    }

    /// True when the edits change the network (not only the power setpoints).
    pub fn touches_network(&self) -> bool {
        !self.shunts.is_empty() || !self.removed_branches.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Effective network: reduced onto generator internal nodes.
    En,
    /// Synchronous motor: loads kept as small motors.
    Sm,
}

/// Swing parameters of either model kind.
///
/// `m` and `d` already contain the division by the synchronous frequency,
/// so the acceleration is `(-d*w + f - sum k*sin(...)) / m`.
#[derive(Debug, Clone)]
pub struct SwingModel {
    pub kind: ModelKind,
    pub node_ids: Vec<NodeLabel>,
    pub n_gens: usize,
    pub m: DVector<f64>,
    pub d: DVector<f64>,
    pub f_const: DVector<f64>,
    pub k: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub e_mag: DVector<f64>,
    pub delta0: DVector<f64>,
    pub p_star: DVector<f64>,
    /// Self conductance `G_ii` of the reduced network.
    pub g_self: DVector<f64>,
    pub omega_r: f64,
}

impl SwingModel {
    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.n()
    }

    /// Same network, different mechanical power setpoints.
    pub fn with_p_star(&self, p_star: DVector<f64>) -> SwingModel {
        let mut out = self.clone();
        for i in 0..self.n() {
            out.f_const[i] = p_star[i] - self.e_mag[i] * self.e_mag[i] * self.g_self[i];
        }
        out.p_star = p_star;
        out
    }

    /// Electrical power `|E_i|^2 G_ii + sum_j K_ij sin(d_i - d_j - g_ij)`.
    pub fn electrical_power(&self, delta: &[f64]) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(n, |i, _| {
            let mut p = self.e_mag[i] * self.e_mag[i] * self.g_self[i];
            for j in 0..n {
                if j != i {
                    p += self.k[(i, j)] * (delta[i] - delta[j] - self.gamma[(i, j)]).sin();
                }
            }
            p
        })
    }
}

/// Internal-node data computed from the case's solved operating point.
#[derive(Debug, Clone)]
pub struct InternalNodes {
    /// `(n_bus + n_gen)`-node network with loads folded in as admittances.
    pub y_aug: AdmittanceMatrix,
    pub e: Vec<Complex64>,
    pub e_mag: Vec<f64>,
    pub delta0: Vec<f64>,
    pub p_star: Vec<f64>,
}

fn bus_voltage(vm: f64, va_deg: f64) -> Complex64 {
    Complex64::from_polar(vm, va_deg.to_radians())
}

fn assemble(case: &PowerCase, removed: &[usize]) -> Result<DMatrix<Complex64>, NetworkError> {
    let idx = case.bus_index();
    let n = case.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (row, br) in case.branches.iter().enumerate() {
        if removed.contains(&row) {
            continue;
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(NetworkError::ZeroImpedanceBranch { from: br.from_bus, to: br.to_bus });
        }
        let f = *idx.get(&br.from_bus).ok_or(NetworkError::UnknownBus(br.from_bus))?;
        let t = *idx.get(&br.to_bus).ok_or(NetworkError::UnknownBus(br.to_bus))?;
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let charging = Complex64::new(0.0, br.b / 2.0);
        let tap = Complex64::from_polar(br.effective_tap(), br.shift.to_radians());
        let ytt = ys + charging;
        y[(f, f)] += ytt / tap.norm_sqr();
        y[(t, t)] += ytt;
        y[(f, t)] -= ys / tap.conj();
        y[(t, f)] -= ys / tap;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(bus.gs, bus.bs) / case.base_mva;
    }
    Ok(y)
}

/// Bus admittance matrix from branch pi-models and bus shunts.
pub fn build_admittance_matrix(case: &PowerCase) -> Result<AdmittanceMatrix, NetworkError> {
    let y = assemble(case, &[])?;
    Ok(AdmittanceMatrix { y, node_ids: case.buses.iter().map(|b| NodeLabel::Bus(b.id)).collect() })
}

/// Load admittance `(pd - j qd) / base / vm^2`.
pub fn load_admittance(case: &PowerCase, bus: usize) -> Complex64 {
    let b = &case.buses[bus];
    Complex64::new(b.pd, -b.qd) / case.base_mva / (b.vm * b.vm)
}

/// Attaches one internal EMF node per generator behind its transient
/// reactance and folds every load into its bus diagonal.
pub fn compute_internal_nodes(case: &PowerCase, params: &GenDynamicParams) -> Result<InternalNodes, NetworkError> {
    augmented(case, params, &NetworkEdits::default(), true)
}

fn augmented(
    case: &PowerCase,
    params: &GenDynamicParams,
    edits: &NetworkEdits,
    loads_as_shunts: bool,
) -> Result<InternalNodes, NetworkError> {
    params.check(case.gens.len())?;
    let idx = case.bus_index();
    let nb = case.buses.len();
    let ng = case.gens.len();
    let ybus = assemble(case, &edits.removed_branches)?;
    let mut y = DMatrix::from_element(nb + ng, nb + ng, Complex64::new(0.0, 0.0));
    y.view_mut((0, 0), (nb, nb)).copy_from(&ybus);
    if loads_as_shunts {
        for i in 0..nb {
            y[(i, i)] += load_admittance(case, i);
        }
    }
    for &(bus, ys) in &edits.shunts {
        let i = *idx.get(&bus).ok_or(NetworkError::UnknownBus(bus))?;
        y[(i, i)] += ys;
    }

    let mut e = Vec::with_capacity(ng);
    let mut p_star = Vec::with_capacity(ng);
    let mut labels: Vec<NodeLabel> = case.buses.iter().map(|b| NodeLabel::Bus(b.id)).collect();
    for (g, gen) in case.gens.iter().enumerate() {
        let b = *idx.get(&gen.bus).ok_or(NetworkError::UnknownBus(gen.bus))?;
        let bus = &case.buses[b];
        let v = bus_voltage(bus.vm, bus.va);
        if v.norm() == 0.0 {
            return Err(NetworkError::ZeroTerminalVoltage { bus: gen.bus });
        }
        let s = Complex64::new(gen.pg, gen.qg) / case.base_mva;
        let current = (s / v).conj();
        let x_sys = params.xdp[g] * case.base_mva / gen.mbase;
        e.push(v + Complex64::new(0.0, x_sys) * current);
        p_star.push(if edits.zeroed_gens.contains(&g) { 0.0 } else { gen.pg / case.base_mva });

        let yx = Complex64::new(1.0, 0.0) / Complex64::new(0.0, x_sys);
        let k = nb + g;
        y[(k, k)] += yx;
        y[(b, b)] += yx;
        y[(k, b)] -= yx;
        y[(b, k)] -= yx;
        labels.push(NodeLabel::Internal { gen: g, bus: gen.bus });
    }
    Ok(InternalNodes {
        y_aug: AdmittanceMatrix { y, node_ids: labels },
        e_mag: e.iter().map(|v| v.norm()).collect(),
        delta0: e.iter().map(|v| v.arg()).collect(),
        e,
        p_star,
    })
}

/// Schur complement onto `keep` (positions into `y.node_ids`).
pub fn kron_reduce(y: &AdmittanceMatrix, keep: &[usize]) -> Result<AdmittanceMatrix, NetworkError> {
    let n = y.len();
    if keep.is_empty() {
        return Err(NetworkError::InvalidKeepSet("empty"));
    }
    let mut mark = vec![false; n];
    for &k in keep {
        if k >= n {
            return Err(NetworkError::InvalidKeepSet("index out of range"));
        }
        if mark[k] {
            return Err(NetworkError::InvalidKeepSet("duplicate index"));
        }
        mark[k] = true;
    }
    let eliminate: Vec<usize> = (0..n).filter(|&i| !mark[i]).collect();
    let schur = schur_complement(&y.y, &eliminate, keep)
        .ok_or(NetworkError::SingularReduction { pivot_ratio: 0.0 })?;
    if schur.pivot_ratio < MIN_PIVOT_RATIO {
        return Err(NetworkError::SingularReduction { pivot_ratio: schur.pivot_ratio });
    }
    Ok(AdmittanceMatrix { y: schur.reduced, node_ids: keep.iter().map(|&i| y.node_ids[i]).collect() })
}

/// A reduced network plus the per-node source data needed for swing
/// parameters.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    pub kind: ModelKind,
    pub y: AdmittanceMatrix,
    pub e_mag: Vec<f64>,
    pub delta0: Vec<f64>,
    pub p_star: Vec<f64>,
    pub n_gens: usize,
}

/// Builds the reduced network of the requested kind.
///
/// EN keeps the generator internal nodes only. SM keeps the internal nodes
/// and every bus without a generator; those buses become motor nodes with
/// `|E| = vm`, `delta0 = va` and `p* = -pd/base`, while generator terminal
/// buses are eliminated with their loads folded in as admittances.
pub fn reduced_network(
    case: &PowerCase,
    params: &GenDynamicParams,
    edits: &NetworkEdits,
    kind: ModelKind,
) -> Result<ReducedNetwork, NetworkError> {
    let nb = case.buses.len();
    let ng = case.gens.len();
    match kind {
        ModelKind::En => {
            let aug = augmented(case, params, edits, true)?;
            let keep: Vec<usize> = (nb..nb + ng).collect();
            let y = kron_reduce(&aug.y_aug, &keep)?;
            Ok(ReducedNetwork { kind, y, e_mag: aug.e_mag, delta0: aug.delta0, p_star: aug.p_star, n_gens: ng })
        }
        ModelKind::Sm => {
            let mut aug = augmented(case, params, edits, false)?;
            let idx = case.bus_index();
            let mut has_gen = vec![false; nb];
            for g in &case.gens {
                has_gen[idx[&g.bus]] = true;
            }
            for i in 0..nb {
                if has_gen[i] {
                    let yl = load_admittance(case, i);
                    aug.y_aug.y[(i, i)] += yl;
                }
            }
            let motors: Vec<usize> = (0..nb).filter(|&i| !has_gen[i]).collect();
            let keep: Vec<usize> = (nb..nb + ng).chain(motors.iter().copied()).collect();
            let y = kron_reduce(&aug.y_aug, &keep)?;
            let mut e_mag = aug.e_mag;
            let mut delta0 = aug.delta0;
            let mut p_star = aug.p_star;
            for &i in &motors {
                let b = &case.buses[i];
                e_mag.push(b.vm);
                delta0.push(b.va.to_radians());
                p_star.push(-b.pd / case.base_mva);
            }
            Ok(ReducedNetwork { kind, y, e_mag, delta0, p_star, n_gens: ng })
        }
    }
}

/// Swing coefficients on a reduced network.
pub fn swing_model_from_network(
    case: &PowerCase,
    params: &GenDynamicParams,
    net: &ReducedNetwork,
) -> SwingModel {
    let n = net.y.len();
    let omega_r = params.omega_r();
    let mut k = DMatrix::zeros(n, n);
    let mut gamma = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let yij = net.y.y[(i, j)];
                k[(i, j)] = net.e_mag[i] * net.e_mag[j] * yij.norm();
                gamma[(i, j)] = if yij.norm() == 0.0 { 0.0 } else { yij.arg() - FRAC_PI_2 };
            }
        }
    }
    let g_self = DVector::from_fn(n, |i, _| net.y.y[(i, i)].re);
    let f_const = DVector::from_fn(n, |i, _| net.p_star[i] - net.e_mag[i] * net.e_mag[i] * g_self[i]);
    let m = DVector::from_fn(n, |i, _| {
        if i < net.n_gens {
            2.0 * params.h[i] * (case.gens[i].mbase / case.base_mva) / omega_r
        } else {
            2.0 * params.h_load / omega_r
        }
    });
    let d = DVector::from_fn(n, |i, _| if i < net.n_gens { params.d[i] } else { params.d_load } / omega_r);
    SwingModel {
        kind: net.kind,
        node_ids: net.y.node_ids.clone(),
        n_gens: net.n_gens,
        m,
        d,
        f_const,
        k,
        gamma,
        e_mag: DVector::from_vec(net.e_mag.clone()),
        delta0: DVector::from_vec(net.delta0.clone()),
        p_star: DVector::from_vec(net.p_star.clone()),
        g_self,
        omega_r,
    }
}

pub fn build_model(
    case: &PowerCase,
    params: &GenDynamicParams,
    edits: &NetworkEdits,
    kind: ModelKind,
) -> Result<SwingModel, NetworkError> {
    let net = reduced_network(case, params, edits, kind)?;
    Ok(swing_model_from_network(case, params, &net))
}

pub fn build_en_model(case: &PowerCase, params: &GenDynamicParams) -> Result<SwingModel, NetworkError> {
    build_model(case, params, &NetworkEdits::default(), ModelKind::En)
}

pub fn build_sm_model(case: &PowerCase, params: &GenDynamicParams) -> Result<SwingModel, NetworkError> {
    build_model(case, params, &NetworkEdits::default(), ModelKind::Sm)
}

/// Number of connected components of the in-service branch graph, with
/// `removed` branches left out.
pub fn component_count(case: &PowerCase, removed: &[usize]) -> usize {
    let idx = case.bus_index();
    let n = case.buses.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (row, br) in case.branches.iter().enumerate() {
        if removed.contains(&row) {
            continue;
        }
        if let (Some(&f), Some(&t)) = (idx.get(&br.from_bus), idx.get(&br.to_bus)) {
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}

/// Net bus injection mismatch `|S_calc - S_spec|` per bus (p.u.) under
/// the case's own voltages; a quality measure of the shipped solution.
pub fn bus_power_mismatch(case: &PowerCase) -> Result<Vec<f64>, NetworkError> {
    let ybus = assemble(case, &[])?;
    let idx = case.bus_index();
    let v: Vec<Complex64> = case.buses.iter().map(|b| bus_voltage(b.vm, b.va)).collect();
    let mut spec: BTreeMap<usize, Complex64> = BTreeMap::new();
    for g in &case.gens {
        *spec.entry(idx[&g.bus]).or_insert(Complex64::new(0.0, 0.0)) += Complex64::new(g.pg, g.qg);
    }
    let n = v.len();
    Ok((0..n)
        .map(|i| {
            let mut cur = Complex64::new(0.0, 0.0);
            for j in 0..n {
                cur += ybus[(i, j)] * v[j];
            }
            let s_calc = v[i] * cur.conj();
            let b = &case.buses[i];
            let s_spec =
                (spec.get(&i).copied().unwrap_or(Complex64::new(0.0, 0.0)) - Complex64::new(b.pd, b.qd)) / case.base_mva;
            (s_calc - s_spec).norm()
        })
        .collect())
}
