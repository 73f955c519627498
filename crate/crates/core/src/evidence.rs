//! Frames of discernment, mass functions and Dempster's rule, and the
//! construction of initial P-states with their evidential intervals.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::exec::Execution;
use crate::model::{
    CompatibilityRelation, Edit, EvidentialInterval, ModelError, PState, Proposition,
};

/// Subset of a frame's elements as a bitmask over `Frame::elements`.
pub type FocalSet = u64;

pub const MAX_FRAME_ELEMENTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvidenceError {
    #[error("mass functions over different frames `{0}` and `{1}`")]
    FrameMismatch(String, String),
    #[error("total conflict combining evidence on frame `{0}`")]
    TotalConflict(String),
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("invalid mass function on frame `{frame}`: {reason}")]
    InvalidMass { frame: String, reason: String },
    #[error("no possible world survives the compatibility relations")]
    NoPossibleWorld,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One world attribute: mutually exclusive, exhaustive elements and the
/// propositions each element makes true.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub name: String,
    pub elements: Vec<String>,
    pub to_propositions: BTreeMap<String, Vec<(Proposition, usize)>>,
}

impl Frame {
    pub fn new(name: &str, elements: &[&str]) -> Self {
        Frame {
            name: name.to_string(),
            elements: elements.iter().map(|e| e.to_string()).collect(),
            to_propositions: BTreeMap::new(),
        }
    }

    pub fn index_of(&self, element: &str) -> Option<usize> {
        self.elements.iter().position(|e| e == element)
    }

    pub fn full_set(&self) -> FocalSet {
        if self.elements.len() >= 64 {
            u64::MAX
        } else {
            (1u64 << self.elements.len()) - 1
        }
    }

    pub fn singleton(&self, index: usize) -> FocalSet {
        1u64 << index
    }

    /// Focal set from element names; `None` if any name is not in the frame.
    pub fn set_of(&self, names: &[&str]) -> Option<FocalSet> {
        names
            .iter()
            .try_fold(0u64, |acc, n| Some(acc | self.singleton(self.index_of(n)?)))
    }

    pub fn names_of(&self, set: FocalSet) -> Vec<&str> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(i, _)| set & (1u64 << i) != 0)
            .map(|(_, e)| e.as_str())
            .collect()
    }
}

/// Basic probability assignment over non-empty subsets of a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MassFunction {
    pub frame: String,
    pub masses: BTreeMap<FocalSet, f64>,
}

impl MassFunction {
    /// Validates focal sets against `frame` and requires the masses to sum
    /// to 1 within 1e-9.
    pub fn new(
        frame: &Frame,
        entries: impl IntoIterator<Item = (FocalSet, f64)>,
    ) -> Result<Self, EvidenceError> {
        let invalid = |reason: String| EvidenceError::InvalidMass {
            frame: frame.name.clone(),
            reason,
        };
        let mut masses = BTreeMap::new();
        for (set, m) in entries {
            if set == 0 || set & !frame.full_set() != 0 {
                return Err(invalid(format!(
                    "focal set {set:#b} is not a non-empty subset"
                )));
            }
            if !(m > 0.0 && m <= 1.0) {
                return Err(invalid(format!("mass {m} outside (0,1]")));
            }
            if masses.insert(set, m).is_some() {
                return Err(invalid(format!(
                    "focal set {{{}}} listed twice",
                    frame.names_of(set).join(" ")
                )));
            }
        }
        let sum: f64 = masses.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("masses sum to {sum}")));
        }
        Ok(MassFunction {
            frame: frame.name.clone(),
            masses,
        })
    }

    /// All mass on the whole frame: total ignorance.
    pub fn vacuous(frame: &Frame) -> Self {
        MassFunction {
            frame: frame.name.clone(),
            masses: BTreeMap::from([(frame.full_set(), 1.0)]),
        }
    }

    pub fn mass(&self, set: FocalSet) -> f64 {
        self.masses.get(&set).copied().unwrap_or(0.0)
    }
}

/// Total belief committed to subsets of `set`.
pub fn belief(m: &MassFunction, set: FocalSet) -> f64 {
    m.masses
        .iter()
        .filter(|(&a, _)| a & !set == 0)
        .map(|(_, v)| v)
        .sum()
}

/// Total belief not committed against `set`.
pub fn plausibility(m: &MassFunction, set: FocalSet) -> f64 {
    m.masses
        .iter()
        .filter(|(&a, _)| a & set != 0)
        .map(|(_, v)| v)
        .sum()
}

/// Dempster's rule of combination.
pub fn combine(m1: &MassFunction, m2: &MassFunction) -> Result<MassFunction, EvidenceError> {
    if m1.frame != m2.frame {
        return Err(EvidenceError::FrameMismatch(
            m1.frame.clone(),
            m2.frame.clone(),
        ));
    }
    let mut acc: BTreeMap<FocalSet, f64> = BTreeMap::new();
    let mut conflict = 0.0;
    for (&a, &ma) in &m1.masses {
        for (&b, &mb) in &m2.masses {
            let c = a & b;
            if c == 0 {
                conflict += ma * mb;
            } else {
                *acc.entry(c).or_insert(0.0) += ma * mb;
            }
        }
    }
    if conflict >= 1.0 - 1e-12 {
        return Err(EvidenceError::TotalConflict(m1.frame.clone()));
    }
    let norm = 1.0 - conflict;
    acc.retain(|_, v| *v > 0.0);
    for v in acc.values_mut() {
        *v /= norm;
    }
    Ok(MassFunction {
        frame: m1.frame.clone(),
        masses: acc,
    })
}

/// Ground facts common to every world plus per-frame uncertain evidence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvidenceSet {
    pub facts: Vec<(Proposition, usize)>,
    pub frames: Vec<Frame>,
    pub masses: Vec<MassFunction>,
}

impl EvidenceSet {
    pub fn frame(&self, name: &str) -> Option<&Frame> {
        self.frames.iter().find(|f| f.name == name)
    }

    /// Dempster combination of every mass function declared on `frame`, or
    /// the vacuous function when there is none.
    pub fn combined(&self, frame: &Frame) -> Result<MassFunction, EvidenceError> {
        let mut out: Option<MassFunction> = None;
        for m in self.masses.iter().filter(|m| m.frame == frame.name) {
            out = Some(match out {
                None => m.clone(),
                Some(acc) => combine(&acc, m)?,
            });
        }
        Ok(out.unwrap_or_else(|| MassFunction::vacuous(frame)))
    }
}

pub fn generate_pstates(
    ev: &EvidenceSet,
    compat: &[CompatibilityRelation],
    n_levels: usize,
) -> Result<Vec<PState>, EvidenceError> {
    generate_pstates_with(ev, compat, n_levels, Execution::default())
}

/// One P-state per combination of frame elements that survives the
/// compatibility relations. Intervals multiply per-frame (bel, pl) of the
/// chosen singletons, treating frames as independent.
pub fn generate_pstates_with(
    ev: &EvidenceSet,
    compat: &[CompatibilityRelation],
    n_levels: usize,
    exec: Execution,
) -> Result<Vec<PState>, EvidenceError> {
    for m in &ev.masses {
        if ev.frame(&m.frame).is_none() {
            return Err(EvidenceError::UnknownFrame(m.frame.clone()));
        }
    }
    let mut intervals: Vec<Vec<(f64, f64)>> = Vec::with_capacity(ev.frames.len());
    for frame in &ev.frames {
        let m = ev.combined(frame)?;
        intervals.push(
            (0..frame.elements.len())
                .map(|i| {
                    let s = frame.singleton(i);
                    (belief(&m, s), plausibility(&m, s))
                })
                .collect(),
        );
    }

    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for frame in &ev.frames {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                (0..frame.elements.len()).map(move |i| {
                    let mut next = c.clone();
                    next.push(i);
                    next
                })
            })
            .collect();
    }

    let results = exec.map(&combos, |choice| {
        build_world(ev, compat, n_levels, &intervals, choice)
    });
    let mut out = Vec::new();
    for r in results {
        if let Some(ps) = r? {
            out.push(ps);
        }
    }
    if out.is_empty() {
        return Err(EvidenceError::NoPossibleWorld);
    }
    Ok(out)
}

fn build_world(
    ev: &EvidenceSet,
    compat: &[CompatibilityRelation],
    n_levels: usize,
    intervals: &[Vec<(f64, f64)>],
    choice: &[usize],
) -> Result<Option<PState>, EvidenceError> {
    let mut support = 1.0;
    let mut plaus = 1.0;
    let mut id_parts = Vec::new();
    let mut literals: Vec<(Proposition, usize)> = ev.facts.clone();
    for ((frame, &i), iv) in ev.frames.iter().zip(choice).zip(intervals) {
        let element = &frame.elements[i];
        support *= iv[i].0;
        plaus *= iv[i].1;
        id_parts.push(format!("{}={}", frame.name, element));
        if let Some(props) = frame.to_propositions.get(element) {
            literals.extend(props.iter().cloned());
        }
    }
    let id = if id_parts.is_empty() {
        "world".to_string()
    } else {
        id_parts.join(",")
    };
    let interval = EvidentialInterval::from_sums(support, plaus)?;
    let edits: Vec<Edit> = literals
        .iter()
        .map(|(p, l)| Edit::assert(p.clone(), *l))
        .collect();
    let ps = PState::new(&id, n_levels, interval).apply_edits(&edits)?;
    for (p, l) in &literals {
        if !ps.holds(*l, p)? {
            log::debug!("world {id} dropped: evidence asserts both {p} and its negation");
            return Ok(None);
        }
    }
    match ps.enforce_compatibility(compat) {
        Ok(ps) => Ok(Some(ps)),
        Err(v) => {
            log::debug!("world {id} dropped: {v}");
            Ok(None)
        }
    }
}

/// Most supported first; ties by plausibility, then id.
pub fn rank_pstates(mut pss: Vec<PState>) -> Vec<PState> {
    pss.sort_by(|a, b| {
        b.interval
            .support()
            .total_cmp(&a.interval.support())
            .then(
                b.interval
                    .plausibility()
                    .total_cmp(&a.interval.plausibility()),
            )
            .then_with(|| a.id.cmp(&b.id))
    });
    pss
}

impl fmt::Display for EvidenceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, l) in &self.facts {
            writeln!(f, "fact {p} @{l}")?;
        }
        for frame in &self.frames {
            writeln!(f, "frame {} {{{}}}", frame.name, frame.elements.join(" "))?;
            for e in &frame.elements {
                if let Some(props) = frame.to_propositions.get(e) {
                    write!(f, "  {e} =>")?;
                    for (p, l) in props {
                        write!(f, " {p} @{l}")?;
                    }
                    writeln!(f)?;
                }
            }
        }
        for m in &self.masses {
            write!(f, "mass {}", m.frame)?;
            let frame = self.frame(&m.frame);
            for (&set, v) in &m.masses {
                let names = frame
                    .map(|fr| fr.names_of(set).join(" "))
                    .unwrap_or_default();
                write!(f, " {{{names}}}={}", crate::dsl::fmt_number(*v))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
