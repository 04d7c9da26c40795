//! Truncated Hilbert space of three atoms in three fiber-linked bimodal
//! cavities, plus the interaction Hamiltonian and the decay channels.
//!
//! Atoms 1 and 2 carry levels `{g_l, g_r, f, e}`, atom 3 carries
//! `{g_r, a, f, e}`. The six bosonic modes are the left-circular modes of
//! cavities 1 and 2, the right-circular modes of cavities 2 and 3, and one
//! resonant mode per fiber. Fiber 1 couples the two left modes, fiber 2 the
//! two right modes.
//!
//! # Basis ordering
//!
//! States are enumerated lexicographically by (atom 1, atom 2, atom 3,
//! photons). Atom levels are ordered `g_l < g_r < f < e` for atoms 1 and 2 and
//! `g_r < a < f < e` for atom 3. Photon configurations are ordered vacuum
//! first, then a single photon in `c1l, c2l, c2r, c3r, f1, f2`. Only states
//! whose excitation number (excited atoms plus photons) does not exceed the
//! cap are kept.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Gl,
    Gr,
    F,
    A,
    E,
    /// Formal `|+>_3` label, only used in the paper-subspace listing.
    Plus,
    /// Formal `|->_3` label, only used in the paper-subspace listing.
    Minus,
}

pub const OUTER_ATOM_LEVELS: [Level; 4] = [Level::Gl, Level::Gr, Level::F, Level::E];
pub const THIRD_ATOM_LEVELS: [Level; 4] = [Level::Gr, Level::A, Level::F, Level::E];

impl Level {
    pub fn tag(self) -> &'static str {
        match self {
            Level::Gl => "gl",
            Level::Gr => "gr",
            Level::F => "f",
            Level::A => "a",
            Level::E => "e",
            Level::Plus => "+",
            Level::Minus => "-",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gl" => Level::Gl,
            "gr" => Level::Gr,
            "f" => Level::F,
            "a" => Level::A,
            "e" => Level::E,
            "+" => Level::Plus,
            "-" => Level::Minus,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    C1Left,
    C2Left,
    C2Right,
    C3Right,
    Fiber1,
    Fiber2,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::C1Left,
        Mode::C2Left,
        Mode::C2Right,
        Mode::C3Right,
        Mode::Fiber1,
        Mode::Fiber2,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    fn tag(self) -> &'static str {
        match self {
            Mode::C1Left => "c1l",
            Mode::C2Left => "c2l",
            Mode::C2Right => "c2r",
            Mode::C3Right => "c3r",
            Mode::Fiber1 => "f1",
            Mode::Fiber2 => "f2",
        }
    }

    pub fn is_fiber(self) -> bool {
        matches!(self, Mode::Fiber1 | Mode::Fiber2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomConfig([Level; 3]);

impl AtomConfig {
    pub fn new(atom1: Level, atom2: Level, atom3: Level) -> Result<Self> {
        let outer_ok = |l: Level| OUTER_ATOM_LEVELS.contains(&l);
        let third_ok = |l: Level| THIRD_ATOM_LEVELS.contains(&l) || matches!(l, Level::Plus | Level::Minus);
        if !outer_ok(atom1) || !outer_ok(atom2) || !third_ok(atom3) {
            return Err(Error::InvalidParameter(format!(
                "level combination ({}, {}, {}) not available",
                atom1.tag(),
                atom2.tag(),
                atom3.tag()
            )));
        }
        Ok(Self([atom1, atom2, atom3]))
    }

    pub fn level(&self, atom: usize) -> Level {
        self.0[atom]
    }

    pub fn with_level(&self, atom: usize, level: Level) -> Result<Self> {
        let mut l = self.0;
        l[atom] = level;
        Self::new(l[0], l[1], l[2])
    }

    pub fn excited_count(&self) -> u32 {
        self.0.iter().filter(|&&l| l == Level::E).count() as u32
    }
}

/// Occupations (0 or 1) of the six modes, stored as a bit set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhotonConfig(u8);

impl PhotonConfig {
    pub const VACUUM: PhotonConfig = PhotonConfig(0);

    pub fn single(mode: Mode) -> Self {
        Self(mode.bit())
    }

    pub fn occupied(&self, mode: Mode) -> bool {
        self.0 & mode.bit() != 0
    }

    pub fn total(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn removed(&self, mode: Mode) -> Option<Self> {
        self.occupied(mode).then_some(Self(self.0 & !mode.bit()))
    }

    pub fn added(&self, mode: Mode) -> Option<Self> {
        (!self.occupied(mode)).then_some(Self(self.0 | mode.bit()))
    }

    /// Sort key: vacuum first, then single photons in mode order.
    fn order_key(&self) -> (u32, u8) {
        (self.total(), self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    pub atoms: AtomConfig,
    pub photons: PhotonConfig,
}

impl BasisState {
    pub fn new(atoms: AtomConfig, photons: PhotonConfig) -> Self {
        Self { atoms, photons }
    }

    pub fn ground(a1: Level, a2: Level, a3: Level) -> Result<Self> {
        Ok(Self::new(AtomConfig::new(a1, a2, a3)?, PhotonConfig::VACUUM))
    }

    pub fn with_photon(a1: Level, a2: Level, a3: Level, mode: Mode) -> Result<Self> {
        Ok(Self::new(AtomConfig::new(a1, a2, a3)?, PhotonConfig::single(mode)))
    }

    pub fn excitation(&self) -> u32 {
        self.atoms.excited_count() + self.photons.total()
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.atoms.0;
        write!(f, "{},{},{};", a[0].tag(), a[1].tag(), a[2].tag())?;
        let modes: Vec<&str> = Mode::ALL
            .iter()
            .filter(|&&m| self.photons.occupied(m))
            .map(|m| m.tag())
            .collect();
        if modes.is_empty() {
            write!(f, "vac")
        } else {
            write!(f, "{}", modes.join("+"))
        }
    }
}

impl FromStr for BasisState {
    type Err = Error;

    /// Parses labels such as `gl,gr,a;vac` or `gl,gr,gr;c3r`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownLabel(s.to_string());
        let (atoms, photons) = s.split_once(';').ok_or_else(bad)?;
        let lv: Vec<Level> = atoms
            .split(',')
            .map(|x| Level::parse(x.trim()).ok_or_else(bad))
            .collect::<Result<_>>()?;
        if lv.len() != 3 {
            return Err(bad());
        }
        let mut ph = PhotonConfig::VACUUM;
        if photons.trim() != "vac" {
            for tag in photons.split('+') {
                let m = Mode::ALL
                    .iter()
                    .find(|m| m.tag() == tag.trim())
                    .ok_or_else(bad)?;
                ph = ph.added(*m).ok_or_else(bad)?;
            }
        }
        let atoms = AtomConfig::new(lv[0], lv[1], lv[2]).map_err(|_| bad())?;
        Ok(BasisState::new(atoms, ph))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMode {
    /// Excitation-truncated product basis over the physical levels.
    Full,
    /// The four dark `Z-` states followed by the thirty block states of the
    /// four `Z+` subspaces, with atom 3 carrying the formal `+`/`-` labels.
    PaperSubspace,
}

#[derive(Clone, Debug)]
pub struct Basis {
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
    cap: u32,
    mode: BasisMode,
}

/// Computational states in the order `|g_l,g_l,a>, |g_l,g_l,f>, |g_r,g_l,a>,
/// |g_r,g_l,f>, |g_r,g_r,a>, |g_r,g_r,f>, |g_l,g_r,a>, |g_l,g_r,f>`.
pub const COMPUTATIONAL_PAIRS: [(Level, Level); 4] = [
    (Level::Gl, Level::Gl),
    (Level::Gr, Level::Gl),
    (Level::Gr, Level::Gr),
    (Level::Gl, Level::Gr),
];

pub fn build_basis(cap: u32, mode: BasisMode) -> Result<Basis> {
    match mode {
        BasisMode::Full => {
            if cap > 1 {
                return Err(Error::Unsupported(format!(
                    "excitation cap {cap}; only 0 and 1 are supported"
                )));
            }
            let mut photon_cfgs: Vec<PhotonConfig> = vec![PhotonConfig::VACUUM];
            photon_cfgs.extend(Mode::ALL.iter().map(|&m| PhotonConfig::single(m)));
            photon_cfgs.sort_by_key(|p| p.order_key());
            let mut states = Vec::new();
            for &l1 in &OUTER_ATOM_LEVELS {
                for &l2 in &OUTER_ATOM_LEVELS {
                    for &l3 in &THIRD_ATOM_LEVELS {
                        let atoms = AtomConfig::new(l1, l2, l3)?;
                        for &ph in &photon_cfgs {
                            let s = BasisState::new(atoms, ph);
                            if s.excitation() <= cap {
                                states.push(s);
                            }
                        }
                    }
                }
            }
            Ok(Basis::from_states(states, cap, mode))
        }
        BasisMode::PaperSubspace => {
            let mut states = Vec::new();
            for &(x, y) in &COMPUTATIONAL_PAIRS {
                states.push(BasisState::ground(x, y, Level::Minus)?);
            }
            for block in crate::effective::printed_blocks()? {
                states.extend(block);
            }
            Ok(Basis::from_states(states, 1, mode))
        }
    }
}

impl Basis {
    fn from_states(states: Vec<BasisState>, cap: u32, mode: BasisMode) -> Self {
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Self {
            states,
            index,
            cap,
            mode,
        }
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn mode(&self) -> BasisMode {
        self.mode
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &BasisState {
        &self.states[i]
    }

    pub fn index_of(&self, s: &BasisState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn index_of_label(&self, label: &str) -> Result<usize> {
        let s: BasisState = label.parse()?;
        self.index_of(&s)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    fn require_full(&self) -> Result<()> {
        if self.mode != BasisMode::Full {
            return Err(Error::Unsupported(
                "operation requires a full-mode basis".into(),
            ));
        }
        Ok(())
    }

    /// Basis indices of the eight computational states, in computational order.
    pub fn computational_indices(&self) -> Result<[usize; 8]> {
        self.require_full()?;
        let mut out = [0; 8];
        for (k, &(x, y)) in COMPUTATIONAL_PAIRS.iter().enumerate() {
            for (j, z) in [Level::A, Level::F].into_iter().enumerate() {
                let s = BasisState::ground(x, y, z)?;
                out[2 * k + j] = self.index_of(&s).ok_or_else(|| {
                    Error::ModelInconsistency(format!("computational state {s} missing"))
                })?;
            }
        }
        Ok(out)
    }

    /// Full-basis vector of `|x, y, +>` (or `|x, y, ->`) with
    /// `|+>_3 = sin(vartheta)|f> + cos(vartheta)|a>` and
    /// `|->_3 = cos(vartheta)|f> - sin(vartheta)|a>`.
    pub fn dressed_third_atom(&self, x: Level, y: Level, plus: bool, vartheta: f64) -> Result<Vec<C64>> {
        self.require_full()?;
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        let (s, c) = vartheta.sin_cos();
        let ia = self.index_of(&BasisState::ground(x, y, Level::A)?).unwrap();
        let iff = self.index_of(&BasisState::ground(x, y, Level::F)?).unwrap();
        if plus {
            v[ia] = C64::new(c, 0.0);
            v[iff] = C64::new(s, 0.0);
        } else {
            v[ia] = C64::new(-s, 0.0);
            v[iff] = C64::new(c, 0.0);
        }
        Ok(v)
    }

    /// Expands a (possibly formal-labelled) state into the full basis.
    pub fn expand_label(&self, s: &BasisState, vartheta: f64) -> Result<Vec<C64>> {
        self.require_full()?;
        match s.atoms.level(2) {
            Level::Plus | Level::Minus => {
                if s.photons != PhotonConfig::VACUUM {
                    return Err(Error::UnknownLabel(s.to_string()));
                }
                self.dressed_third_atom(
                    s.atoms.level(0),
                    s.atoms.level(1),
                    s.atoms.level(2) == Level::Plus,
                    vartheta,
                )
            }
            _ => {
                let i = self
                    .index_of(s)
                    .ok_or_else(|| Error::UnknownLabel(s.to_string()))?;
                let mut v = vec![C64::new(0.0, 0.0); self.dim()];
                v[i] = C64::new(1.0, 0.0);
                Ok(v)
            }
        }
    }
}

/// Physical constants of the cavity-atom-fiber array. Rates and couplings are
/// angular frequencies in the same time unit as `gate_time`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub lambda: f64,
    pub upsilon: f64,
    pub vartheta: f64,
    pub gate_time: f64,
    pub gamma: f64,
    pub kappa_c: f64,
    pub kappa_f: f64,
    #[serde(default)]
    pub atomic_decay: AtomicDecay,
}

/// How `gamma` is distributed over the three emission channels of an atom.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomicDecay {
    /// Every channel decays at `gamma`, so an excited atom decays at `3 gamma`.
    #[default]
    PerChannel,
    /// The three channels share `gamma` equally.
    PerAtom,
}

impl AtomicDecay {
    pub fn channel_rate(self, gamma: f64) -> f64 {
        match self {
            AtomicDecay::PerChannel => gamma,
            AtomicDecay::PerAtom => gamma / 3.0,
        }
    }
}

impl Default for SystemParams {
    /// `lambda = upsilon = 150/T`, `vartheta = -pi/4` (Toffoli), `T = 1`, no
    /// dissipation.
    fn default() -> Self {
        Self {
            lambda: 150.0,
            upsilon: 150.0,
            vartheta: -std::f64::consts::FRAC_PI_4,
            gate_time: 1.0,
            gamma: 0.0,
            kappa_c: 0.0,
            kappa_f: 0.0,
            atomic_decay: AtomicDecay::PerChannel,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let fin = [
            self.lambda,
            self.upsilon,
            self.vartheta,
            self.gate_time,
            self.gamma,
            self.kappa_c,
            self.kappa_f,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !fin {
            return Err(Error::InvalidParameter("non-finite system parameter".into()));
        }
        if self.lambda <= 0.0 || self.upsilon <= 0.0 || self.gate_time <= 0.0 {
            return Err(Error::InvalidParameter(
                "lambda, upsilon and gate_time must be positive".into(),
            ));
        }
        if self.gamma < 0.0 || self.kappa_c < 0.0 || self.kappa_f < 0.0 {
            return Err(Error::InvalidParameter("decay rates must be non-negative".into()));
        }
        Ok(())
    }

    /// Normalization of the bright state, `upsilon / sqrt(3 upsilon^2 + 2 lambda^2)`.
    pub fn n3(&self) -> f64 {
        bright_normalization(self.lambda, self.upsilon)
    }
}

pub fn bright_normalization(lambda: f64, upsilon: f64) -> f64 {
    upsilon / (3.0 * upsilon * upsilon + 2.0 * lambda * lambda).sqrt()
}

/// The drive-independent and drive-proportional pieces of the interaction
/// Hamiltonian, so that `H(t) = coupling + w1 drive1 + w3f drive3f + w3a drive3a`.
#[derive(Clone, Debug)]
pub struct HamiltonianTerms {
    /// Atom-cavity plus cavity-fiber couplings.
    pub coupling: SparseOperator,
    /// `|e>_1<f| + h.c.`
    pub drive1: SparseOperator,
    /// `|e>_3<f| + h.c.`
    pub drive3f: SparseOperator,
    /// `|e>_3<a| + h.c.`
    pub drive3a: SparseOperator,
}

impl HamiltonianTerms {
    pub fn new(basis: &Basis, p: &SystemParams) -> Result<Self> {
        basis.require_full()?;
        p.validate()?;
        let mut coupling = Vec::new();
        // lambda |e>_k <g| a_mode + h.c.
        let ac = [
            (0, Level::Gl, Mode::C1Left),
            (1, Level::Gl, Mode::C2Left),
            (1, Level::Gr, Mode::C2Right),
            (2, Level::Gr, Mode::C3Right),
        ];
        for &(atom, g, mode) in &ac {
            for (col, s) in basis.states().iter().enumerate() {
                if s.atoms.level(atom) != g {
                    continue;
                }
                let Some(ph) = s.photons.removed(mode) else { continue };
                let t = BasisState::new(s.atoms.with_level(atom, Level::E)?, ph);
                if let Some(row) = basis.index_of(&t) {
                    coupling.push((row, col, C64::new(p.lambda, 0.0)));
                    coupling.push((col, row, C64::new(p.lambda, 0.0)));
                }
            }
        }
        // upsilon b_k^dag (a + a') + h.c.
        let cf = [
            (Mode::Fiber1, Mode::C1Left),
            (Mode::Fiber1, Mode::C2Left),
            (Mode::Fiber2, Mode::C2Right),
            (Mode::Fiber2, Mode::C3Right),
        ];
        for &(fiber, cav) in &cf {
            for (col, s) in basis.states().iter().enumerate() {
                let Some(ph) = s.photons.removed(cav).and_then(|p| p.added(fiber)) else { continue };
                if let Some(row) = basis.index_of(&BasisState::new(s.atoms, ph)) {
                    coupling.push((row, col, C64::new(p.upsilon, 0.0)));
                    coupling.push((col, row, C64::new(p.upsilon, 0.0)));
                }
            }
        }
        let dim = basis.dim();
        Ok(Self {
            coupling: SparseOperator::from_triplets(dim, coupling)?,
            drive1: transition_hermitian(basis, 0, Level::F)?,
            drive3f: transition_hermitian(basis, 2, Level::F)?,
            drive3a: transition_hermitian(basis, 2, Level::A)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.coupling.dim()
    }

    /// Combined drive on atom 3 for a mixing angle: `sin(vt) drive3f + cos(vt) drive3a`.
    pub fn drive3(&self, vartheta: f64) -> SparseOperator {
        let (s, c) = vartheta.sin_cos();
        self.drive3f
            .scaled(C64::new(s, 0.0))
            .plus(&self.drive3a.scaled(C64::new(c, 0.0)))
            .expect("same dimension")
    }

    pub fn at(&self, omega1: f64, omega3f: f64, omega3a: f64) -> SparseOperator {
        let r = |x: f64| C64::new(x, 0.0);
        self.coupling
            .plus(&self.drive1.scaled(r(omega1)))
            .and_then(|h| h.plus(&self.drive3f.scaled(r(omega3f))))
            .and_then(|h| h.plus(&self.drive3a.scaled(r(omega3a))))
            .expect("same dimension")
    }
}

/// `|e>_atom<from| + h.c.` on the vacuum-and-photon sectors of the basis.
fn transition_hermitian(basis: &Basis, atom: usize, from: Level) -> Result<SparseOperator> {
    let mut trip = Vec::new();
    for (col, s) in basis.states().iter().enumerate() {
        if s.atoms.level(atom) != from {
            continue;
        }
        let t = BasisState::new(s.atoms.with_level(atom, Level::E)?, s.photons);
        if let Some(row) = basis.index_of(&t) {
            trip.push((row, col, C64::new(1.0, 0.0)));
            trip.push((col, row, C64::new(1.0, 0.0)));
        }
    }
    SparseOperator::from_triplets(basis.dim(), trip)
}

/// Instantaneous interaction Hamiltonian for drive values `omega1`,
/// `omega3f = Omega_3 sin(vartheta)` and `omega3a = Omega_3 cos(vartheta)`.
/// Couplings leaving the truncated basis are dropped.
pub fn build_full_hamiltonian(
    basis: &Basis,
    p: &SystemParams,
    omega1: f64,
    omega3f: f64,
    omega3a: f64,
) -> Result<SparseOperator> {
    Ok(HamiltonianTerms::new(basis, p)?.at(omega1, omega3f, omega3a))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    /// Spontaneous emission `|to>_atom <e|`.
    Atomic { atom: usize, to: Level },
    Cavity(Mode),
    Fiber(Mode),
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelKind::Atomic { atom, to } => write!(f, "atom{}:e->{}", atom + 1, to.tag()),
            ChannelKind::Cavity(m) | ChannelKind::Fiber(m) => write!(f, "decay:{}", m.tag()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct JumpChannel {
    pub kind: ChannelKind,
    pub rate: f64,
    pub op: SparseOperator,
}

impl JumpChannel {
    pub fn restricted(&self, keep: &[usize]) -> Self {
        Self {
            kind: self.kind,
            rate: self.rate,
            op: self.op.restrict(keep),
        }
    }
}

/// Nine spontaneous-emission channels (three per atom, onto that atom's own
/// ground levels), four cavity-mode and two fiber-mode decay channels.
pub fn build_jump_operators(basis: &Basis, p: &SystemParams) -> Result<Vec<JumpChannel>> {
    basis.require_full()?;
    p.validate()?;
    let dim = basis.dim();
    let mut out = Vec::with_capacity(15);
    for atom in 0..3 {
        let grounds: &[Level] = if atom < 2 {
            &[Level::F, Level::Gl, Level::Gr]
        } else {
            &[Level::F, Level::Gr, Level::A]
        };
        for &to in grounds {
            let mut trip = Vec::new();
            for (col, s) in basis.states().iter().enumerate() {
                if s.atoms.level(atom) == Level::E {
                    let t = BasisState::new(s.atoms.with_level(atom, to)?, s.photons);
                    if let Some(row) = basis.index_of(&t) {
                        trip.push((row, col, C64::new(1.0, 0.0)));
                    }
                }
            }
            out.push(JumpChannel {
                kind: ChannelKind::Atomic { atom, to },
                rate: p.atomic_decay.channel_rate(p.gamma),
                op: SparseOperator::from_triplets(dim, trip)?,
            });
        }
    }
    for mode in Mode::ALL {
        let mut trip = Vec::new();
        for (col, s) in basis.states().iter().enumerate() {
            if let Some(ph) = s.photons.removed(mode) {
                if let Some(row) = basis.index_of(&BasisState::new(s.atoms, ph)) {
                    trip.push((row, col, C64::new(1.0, 0.0)));
                }
            }
        }
        let op = SparseOperator::from_triplets(dim, trip)?;
        let (kind, rate) = if mode.is_fiber() {
            (ChannelKind::Fiber(mode), p.kappa_f)
        } else {
            (ChannelKind::Cavity(mode), p.kappa_c)
        };
        out.push(JumpChannel { kind, rate, op });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> Basis {
        build_basis(1, BasisMode::Full).unwrap()
    }

    #[test]
    fn basis_dimensions() {
        assert_eq!(build_basis(0, BasisMode::Full).unwrap().dim(), 27);
        assert_eq!(full().dim(), 216);
        assert_eq!(build_basis(1, BasisMode::PaperSubspace).unwrap().dim(), 34);
    }

    #[test]
    fn unsupported_cap_is_rejected() {
        assert!(matches!(build_basis(2, BasisMode::Full), Err(Error::Unsupported(_))));
    }

    #[test]
    fn basis_index_is_a_bijection() {
        let b = full();
        for (i, s) in b.states().iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
            assert!(s.excitation() <= b.cap());
        }
    }

    #[test]
    fn labels_round_trip() {
        let b = full();
        for s in b.states() {
            assert_eq!(s.to_string().parse::<BasisState>().unwrap(), *s);
        }
        assert!("gl,gl,gl;vac".parse::<BasisState>().is_err());
        assert!("a,gl,gr;vac".parse::<BasisState>().is_err());
    }

    #[test]
    fn ordering_starts_with_lexicographic_ground_states() {
        let b = full();
        assert_eq!(b.state(0).to_string(), "gl,gl,gr;vac");
        assert_eq!(b.state(1).to_string(), "gl,gl,gr;c1l");
        assert_eq!(b.state(7).to_string(), "gl,gl,a;vac");
    }

    #[test]
    fn cavity_emission_matrix_element() {
        let b = full();
        let p = SystemParams {
            lambda: 1.0,
            upsilon: 1.0,
            ..Default::default()
        };
        let h = build_full_hamiltonian(&b, &p, 0.0, 0.0, 0.0).unwrap();
        let row = b.index_of_label("gl,gr,gr;c3r").unwrap();
        let col = b.index_of_label("gl,gr,e;vac").unwrap();
        assert_eq!(h.get(row, col), C64::new(1.0, 0.0));
    }

    #[test]
    fn classical_drive_matrix_element() {
        let b = full();
        let h = build_full_hamiltonian(&b, &SystemParams::default(), 0.5, 0.0, 0.0).unwrap();
        let row = b.index_of_label("e,gl,gr;vac").unwrap();
        let col = b.index_of_label("f,gl,gr;vac").unwrap();
        assert_eq!(h.get(row, col), C64::new(0.5, 0.0));
    }

    #[test]
    fn hamiltonian_rejects_paper_subspace() {
        let b = build_basis(1, BasisMode::PaperSubspace).unwrap();
        assert!(build_full_hamiltonian(&b, &SystemParams::default(), 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn undriven_hamiltonian_conserves_excitation() {
        let b = full();
        let h = build_full_hamiltonian(&b, &SystemParams::default(), 0.0, 0.0, 0.0).unwrap();
        for (r, c, _) in h.entries() {
            assert_eq!(b.state(r).excitation(), b.state(c).excitation());
        }
        let t = HamiltonianTerms::new(&b, &SystemParams::default()).unwrap();
        for d in [&t.drive1, &t.drive3f, &t.drive3a] {
            for (r, c, _) in d.entries() {
                let (er, ec) = (b.state(r).excitation() as i32, b.state(c).excitation() as i32);
                assert_eq!((er - ec).abs(), 1);
            }
        }
    }

    #[test]
    fn fifteen_lowering_channels() {
        let b = full();
        let p = SystemParams {
            gamma: 0.0,
            kappa_c: 0.3,
            kappa_f: 0.2,
            ..Default::default()
        };
        let jumps = build_jump_operators(&b, &p).unwrap();
        assert_eq!(jumps.len(), 15);
        let atomic = jumps.iter().filter(|j| matches!(j.kind, ChannelKind::Atomic { .. })).count();
        assert_eq!(atomic, 9);
        for j in &jumps {
            assert!(j.op.nnz() > 0, "{} is empty", j.kind);
            for (r, c, _) in j.op.entries() {
                assert_eq!(b.state(r).excitation() + 1, b.state(c).excitation());
            }
            let expected = match j.kind {
                ChannelKind::Atomic { .. } => 0.0,
                ChannelKind::Cavity(_) => 0.3,
                ChannelKind::Fiber(_) => 0.2,
            };
            assert_eq!(j.rate, expected);
        }
    }

    #[test]
    fn negative_rates_are_rejected() {
        let p = SystemParams {
            gamma: -1.0,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn csv_round_trip_of_hamiltonian() {
        let b = full();
        let h = build_full_hamiltonian(&b, &SystemParams::default(), 1.25, -0.5, 0.75).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let back = SparseOperator::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, h);
    }
}
