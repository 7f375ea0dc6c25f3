//! Line pressure and suction force for one pump/valve pair driving two cups.
//!
//! The line follows first-order dynamics toward ambient or toward the pump's
//! rated vacuum, depending on the valve and pump:
//!
//! ```text
//! valve open:               dP/dt = k_vent · (0 − P)
//! valve closed, pump on:    dP/dt = k_pump · (P_min − P) + K_leak · (0 − P)
//! valve closed, pump off:   dP/dt = K_leak · (0 − P)
//! ```
//!
//! with `K_leak` the sum over both cups of the material leak rate for a
//! sealed cup, or `k_open_cup` for a cup open to air. Both cups share the
//! line, so one open cup drags the whole line toward ambient.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::firmware::DeviceState;
use crate::geometry::{angle_between, SurfacePatch, Vec3};
use crate::protocol::Channel;

pub const GRAVITY: f64 = 9.81;
pub const CUPS_PER_LINE: usize = 2;
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.5;
/// Integration substep used inside [`step_pressure`].
const MAX_SUBSTEP_S: f64 = 0.001;

#[derive(Debug, Error)]
pub enum PneumaticsError {
    #[error("invalid pneumatic parameter: {0}")]
    InvalidParam(String),
    #[error("invalid material table: {0}")]
    InvalidMaterial(String),
    #[error("reading material table: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing material table: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialProfile {
    pub name: String,
    /// Leak rate through one sealed cup, per second.
    pub leak_coeff: f64,
    pub suctionable: bool,
}

impl MaterialProfile {
    pub fn new(name: &str, leak_coeff: f64, suctionable: bool) -> Self {
        Self {
            name: name.to_owned(),
            leak_coeff,
            suctionable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialTable {
    #[serde(rename = "material")]
    materials: Vec<MaterialProfile>,
}

impl Default for MaterialTable {
    fn default() -> Self {
        Self {
            materials: vec![
                MaterialProfile::new("glass", 0.0, true),
                MaterialProfile::new("plastic", 0.5, true),
                MaterialProfile::new("leather", 1.0, true),
                MaterialProfile::new("cardboard", 5.0, true),
                // foam props (banana, cucumber): curved and porous
                MaterialProfile::new("foam", 15.0, false),
            ],
        }
    }
}

impl MaterialTable {
    pub fn new(materials: Vec<MaterialProfile>) -> Result<Self, PneumaticsError> {
        let table = Self { materials };
        table.validate()?;
        Ok(table)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, PneumaticsError> {
        let table: MaterialTable = toml::from_str(s)?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, PneumaticsError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("material table serializes")
    }

    fn validate(&self) -> Result<(), PneumaticsError> {
        let mut seen = BTreeMap::new();
        for m in &self.materials {
            if m.name.trim().is_empty() {
                return Err(PneumaticsError::InvalidMaterial("empty material name".into()));
            }
            if !(m.leak_coeff.is_finite() && m.leak_coeff >= 0.0) {
                return Err(PneumaticsError::InvalidMaterial(format!(
                    "{}: leak_coeff must be finite and >= 0",
                    m.name
                )));
            }
            if seen.insert(m.name.as_str(), ()).is_some() {
                return Err(PneumaticsError::InvalidMaterial(format!(
                    "duplicate material `{}`",
                    m.name
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&MaterialProfile> {
        self.materials.iter().find(|m| m.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MaterialProfile> {
        self.materials.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PneumaticParams {
    /// Rated vacuum of the pump, kPa gauge.
    pub p_min_kpa: f64,
    pub k_pump: f64,
    pub k_vent: f64,
    pub k_open_cup: f64,
    pub cup_diameter_m: f64,
    /// Integration step, seconds; at most 10 ms.
    pub dt: f64,
}

impl Default for PneumaticParams {
    fn default() -> Self {
        Self {
            p_min_kpa: -60.0,
            k_pump: 5.0,
            k_vent: 20.0,
            k_open_cup: 15.0,
            cup_diameter_m: 0.015,
            dt: 0.005,
        }
    }
}

impl PneumaticParams {
    pub fn validate(&self) -> Result<(), PneumaticsError> {
        let bad = |what: &str| Err(PneumaticsError::InvalidParam(what.to_owned()));
        if !(self.p_min_kpa.is_finite() && self.p_min_kpa < 0.0) {
            return bad("p_min_kpa must be negative");
        }
        for (name, v) in [
            ("k_pump", self.k_pump),
            ("k_vent", self.k_vent),
            ("k_open_cup", self.k_open_cup),
            ("cup_diameter_m", self.cup_diameter_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be > 0"));
            }
        }
        if !(self.dt > 0.0 && self.dt <= 0.010) {
            return bad("dt must be in (0, 0.010] s");
        }
        Ok(())
    }

    pub fn cup_area_m2(&self) -> f64 {
        let r = self.cup_diameter_m / 2.0;
        PI * r * r
    }
}

/// Contact state of one cup.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum CupSeal {
    #[default]
    Open,
    Sealed { material: MaterialProfile },
}

impl CupSeal {
    pub fn sealed(material: MaterialProfile) -> Self {
        CupSeal::Sealed { material }
    }

    pub fn is_sealed(&self) -> bool {
        matches!(self, CupSeal::Sealed { .. })
    }

    pub fn material(&self) -> Option<&MaterialProfile> {
        match self {
            CupSeal::Open => None,
            CupSeal::Sealed { material } => Some(material),
        }
    }

    pub fn leak_rate(&self, params: &PneumaticParams) -> f64 {
        match self {
            CupSeal::Open => params.k_open_cup,
            CupSeal::Sealed { material } => material.leak_coeff,
        }
    }
}

/// One arm's suction line: gauge pressure and the two cups it feeds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LineState {
    gauge_kpa: f64,
    cups: [CupSeal; CUPS_PER_LINE],
}

impl LineState {
    pub fn ambient() -> Self {
        Self::default()
    }

    pub fn with_cups(mut self, cups: [CupSeal; CUPS_PER_LINE]) -> Self {
        self.cups = cups;
        self
    }

    /// Builds a line at a given pressure, clamped to the physical range.
    pub fn at_pressure(gauge_kpa: f64, cups: [CupSeal; CUPS_PER_LINE], params: &PneumaticParams) -> Self {
        Self {
            gauge_kpa: gauge_kpa.clamp(params.p_min_kpa, 0.0),
            cups,
        }
    }

    pub fn gauge_kpa(&self) -> f64 {
        self.gauge_kpa
    }

    pub fn cups(&self) -> &[CupSeal; CUPS_PER_LINE] {
        &self.cups
    }

    pub fn set_cup(&mut self, index: usize, seal: CupSeal) {
        self.cups[index] = seal;
    }

    pub fn sealed_cups(&self) -> usize {
        self.cups.iter().filter(|c| c.is_sealed()).count()
    }

    pub fn leak_rate(&self, params: &PneumaticParams) -> f64 {
        self.cups.iter().map(|c| c.leak_rate(params)).sum()
    }
}

/// Both arms' lines.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PressureState {
    lines: [LineState; 2],
}

impl PressureState {
    pub fn ambient() -> Self {
        Self::default()
    }

    pub fn line(&self, channel: Channel) -> &LineState {
        &self.lines[channel.index()]
    }

    pub fn line_mut(&mut self, channel: Channel) -> &mut LineState {
        &mut self.lines[channel.index()]
    }

    pub fn gauges_kpa(&self) -> [f64; 2] {
        [self.lines[0].gauge_kpa, self.lines[1].gauge_kpa]
    }
}

fn derivative(p: f64, device: &DeviceState, leak: f64, params: &PneumaticParams) -> f64 {
    if !device.valve_closed() {
        return params.k_vent * (0.0 - p);
    }
    let pump = if device.pump_on() {
        params.k_pump * (params.p_min_kpa - p)
    } else {
        0.0
    };
    pump + leak * (0.0 - p)
}

/// Advances one line by `duration` seconds with forward-Euler substeps no
/// longer than both `params.dt` and 1 ms.
pub fn advance_line(line: &mut LineState, device: &DeviceState, params: &PneumaticParams, duration: f64) {
    if duration <= 0.0 {
        return;
    }
    let max_step = params.dt.min(MAX_SUBSTEP_S);
    let n = (duration / max_step).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    let leak = line.leak_rate(params);
    let mut p = line.gauge_kpa;
    for _ in 0..n {
        p += h * derivative(p, device, leak, params);
        p = p.clamp(params.p_min_kpa, 0.0);
    }
    line.gauge_kpa = p;
}

/// One integration step of `params.dt` on the line belonging to `device`.
pub fn step_pressure(ps: &PressureState, device: &DeviceState, params: &PneumaticParams) -> PressureState {
    let mut next = ps.clone();
    advance_line(next.line_mut(device.channel()), device, params, params.dt);
    next
}

/// Analytic plateau with the valve closed and the pump running.
pub fn steady_state_kpa(line: &LineState, params: &PneumaticParams) -> f64 {
    params.p_min_kpa * params.k_pump / (params.k_pump + line.leak_rate(params))
}

/// Holding force of the line, newtons. Only sealed cups contribute.
pub fn suction_force(line: &LineState, params: &PneumaticParams) -> f64 {
    let per_cup = line.gauge_kpa.abs() * 1000.0 * params.cup_area_m2();
    per_cup * line.sealed_cups() as f64
}

/// Force the line would hold once it reaches its plateau.
pub fn steady_state_force(line: &LineState, params: &PneumaticParams) -> f64 {
    let plateau = LineState {
        gauge_kpa: steady_state_kpa(line, params),
        cups: line.cups.clone(),
    };
    suction_force(&plateau, params)
}

pub fn required_hold_force(mass_kg: f64, safety_factor: f64) -> f64 {
    mass_kg * GRAVITY * safety_factor
}

pub fn holds_payload(line: &LineState, mass_kg: f64, params: &PneumaticParams, safety_factor: f64) -> bool {
    suction_force(line, params) >= required_hold_force(mass_kg, safety_factor)
}

/// Cup geometry for a seal check: center of the lip and the direction the
/// cup faces (toward the surface it should seal on).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CupPose {
    pub center: Vec3,
    pub axis: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SealTolerance {
    pub max_angle_rad: f64,
    pub max_standoff_m: f64,
}

impl Default for SealTolerance {
    fn default() -> Self {
        Self {
            max_angle_rad: 10f64.to_radians(),
            max_standoff_m: 0.003,
        }
    }
}

/// A cup seals when the material takes suction, the cup faces into the
/// surface within the angular tolerance, its center projects inside the
/// patch and its lip is within the standoff tolerance of the plane.
pub fn seal_check(cup: &CupPose, surface: &SurfacePatch, material: &MaterialProfile, tol: &SealTolerance) -> bool {
    if !material.suctionable {
        return false;
    }
    let into_surface = -surface.normal;
    if angle_between(&cup.axis, &into_surface) > tol.max_angle_rad {
        return false;
    }
    if !surface.contains_projection(&cup.center) {
        return false;
    }
    surface.height_of(&cup.center).abs() <= tol.max_standoff_m
}

/// Close / Open / Suction phase trace as (t, phase, gauge kPa) rows.
pub fn phase_trace(
    material: &MaterialProfile,
    params: &PneumaticParams,
    phase_s: [f64; 3],
    sample_dt: f64,
) -> Vec<(f64, &'static str, f64)> {
    let channel = Channel::Left;
    let mut line = LineState::ambient();
    let mut rows = Vec::new();
    let mut t = 0.0;
    let phases: [(&'static str, DeviceState, [CupSeal; 2]); 3] = [
        ("close", DeviceState::idle(channel), [CupSeal::Open, CupSeal::Open]),
        ("open", DeviceState::suction_active(channel), [CupSeal::Open, CupSeal::Open]),
        (
            "suction",
            DeviceState::suction_active(channel),
            [CupSeal::sealed(material.clone()), CupSeal::sealed(material.clone())],
        ),
    ];
    rows.push((t, "close", line.gauge_kpa));
    for ((name, device, cups), duration) in phases.into_iter().zip(phase_s) {
        line.cups = cups;
        let steps = (duration / sample_dt).round() as usize;
        for _ in 0..steps {
            advance_line(&mut line, &device, params, sample_dt);
            t += sample_dt;
            rows.push((t, name, line.gauge_kpa));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table() -> MaterialTable {
        MaterialTable::default()
    }

    fn sealed(name: &str) -> CupSeal {
        CupSeal::sealed(table().get(name).unwrap().clone())
    }

    fn run(line: &mut LineState, device: &DeviceState, seconds: f64) {
        advance_line(line, device, &PneumaticParams::default(), seconds);
    }

    #[test]
    fn default_leak_ordering() {
        let t = table();
        let leak = |n| t.get(n).unwrap().leak_coeff;
        assert!(leak("glass") < leak("plastic"));
        assert!(leak("plastic") < leak("leather"));
        assert!(leak("leather") < leak("cardboard"));
    }

    #[test]
    fn sealed_glass_reaches_rated_vacuum() {
        let on = DeviceState::suction_active(Channel::Left);
        let mut line = LineState::ambient().with_cups([sealed("glass"), sealed("glass")]);
        run(&mut line, &on, 3.0);
        assert_relative_eq!(line.gauge_kpa(), -60.0, epsilon = 1e-3);
    }

    #[test]
    fn sealed_cardboard_plateau() {
        let params = PneumaticParams::default();
        let on = DeviceState::suction_active(Channel::Left);
        let mut line = LineState::ambient().with_cups([sealed("cardboard"), sealed("cardboard")]);
        assert_relative_eq!(steady_state_kpa(&line, &params), -20.0, epsilon = 1e-12);
        run(&mut line, &on, 5.0 / params.k_pump);
        assert!((line.gauge_kpa() + 20.0).abs() <= 0.2, "{}", line.gauge_kpa());
    }

    #[test]
    fn vent_returns_to_ambient() {
        let params = PneumaticParams::default();
        let off = DeviceState::idle(Channel::Left);
        let mut line = LineState::at_pressure(-55.0, Default::default(), &params);
        run(&mut line, &off, 1.0);
        assert!(line.gauge_kpa().abs() < 1e-6);
    }

    #[test]
    fn force_values() {
        let params = PneumaticParams::default();
        let both = LineState::at_pressure(-60.0, [sealed("glass"), sealed("glass")], &params);
        // 2 · 60 000 Pa · π · 0.0075² m²
        assert_relative_eq!(suction_force(&both, &params), 21.205750411731103, epsilon = 1e-9);
        let none = LineState::at_pressure(-60.0, Default::default(), &params);
        assert_eq!(suction_force(&none, &params), 0.0);
        let ambient = LineState::at_pressure(0.0, [sealed("glass"), sealed("glass")], &params);
        assert_eq!(suction_force(&ambient, &params), 0.0);
    }

    #[test]
    fn jar_payload() {
        let params = PneumaticParams::default();
        let both = LineState::at_pressure(-60.0, [sealed("glass"), sealed("glass")], &params);
        assert!(holds_payload(&both, 0.537, &params, 1.5));
        let one = LineState::ambient().with_cups([sealed("glass"), CupSeal::Open]);
        let p_ss = steady_state_kpa(&one, &params);
        assert_relative_eq!(p_ss, -15.0, epsilon = 1e-12);
        let one = LineState::at_pressure(p_ss, one.cups().clone(), &params);
        assert_relative_eq!(suction_force(&one, &params), 2.650718801466388, epsilon = 1e-9);
        assert!(!holds_payload(&one, 0.537, &params, 1.5));
        assert!(holds_payload(&LineState::ambient(), 0.0, &params, 1.5));
    }

    fn face() -> SurfacePatch {
        SurfacePatch {
            center: Vec3::new(0.0, 0.0, 0.01),
            normal: Vec3::z(),
            u_axis: Vec3::x(),
            half_u: 0.14,
            half_v: 0.04,
        }
    }

    #[test]
    fn flush_cup_seals_on_glass() {
        let cup = CupPose {
            center: Vec3::new(0.05, 0.0, 0.011),
            axis: -Vec3::z(),
        };
        assert!(seal_check(&cup, &face(), table().get("glass").unwrap(), &SealTolerance::default()));
    }

    #[test]
    fn non_suctionable_never_seals() {
        let cup = CupPose {
            center: Vec3::new(0.0, 0.0, 0.01),
            axis: -Vec3::z(),
        };
        assert!(!seal_check(&cup, &face(), table().get("foam").unwrap(), &SealTolerance::default()));
    }

    #[test]
    fn tilted_cup_fails() {
        let tilt = 20f64.to_radians();
        let cup = CupPose {
            center: Vec3::new(0.0, 0.0, 0.01),
            axis: Vec3::new(tilt.sin(), 0.0, -tilt.cos()),
        };
        assert!(!seal_check(&cup, &face(), table().get("glass").unwrap(), &SealTolerance::default()));
    }

    #[test]
    fn off_patch_or_standoff_fails() {
        let glass = table().get("glass").unwrap().clone();
        let tol = SealTolerance::default();
        let off_edge = CupPose {
            center: Vec3::new(0.16, 0.0, 0.01),
            axis: -Vec3::z(),
        };
        assert!(!seal_check(&off_edge, &face(), &glass, &tol));
        let hovering = CupPose {
            center: Vec3::new(0.0, 0.0, 0.03),
            axis: -Vec3::z(),
        };
        assert!(!seal_check(&hovering, &face(), &glass, &tol));
    }

    #[test]
    fn material_table_toml_round_trip() {
        let t = table();
        let back = MaterialTable::from_toml_str(&t.to_toml_string()).unwrap();
        assert_eq!(t, back);
        let dup = "[[material]]\nname='a'\nleak_coeff=1.0\nsuctionable=true\n[[material]]\nname='a'\nleak_coeff=1.0\nsuctionable=true\n";
        assert!(MaterialTable::from_toml_str(dup).is_err());
        let neg = "[[material]]\nname='a'\nleak_coeff=-1.0\nsuctionable=true\n";
        assert!(MaterialTable::from_toml_str(neg).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(PneumaticParams::default().validate().is_ok());
        let p = PneumaticParams {
            dt: 0.02,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = PneumaticParams {
            k_pump: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn phase_trace_shape() {
        let glass = table().get("glass").unwrap().clone();
        let rows = phase_trace(&glass, &PneumaticParams::default(), [1.0, 2.0, 3.0], 0.01);
        let close_end = rows.iter().filter(|r| r.1 == "close").last().unwrap().2;
        let open_end = rows.iter().filter(|r| r.1 == "open").last().unwrap().2;
        let last = rows.last().unwrap().2;
        assert_eq!(close_end, 0.0);
        // both cups open: -60·5/35
        assert!((open_end + 60.0 * 5.0 / 35.0).abs() < 0.05, "{open_end}");
        assert!((last + 60.0).abs() < 0.1);
    }
}
