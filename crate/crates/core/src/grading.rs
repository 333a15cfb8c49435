//! DME grading rules, the simulated annotation ground truth, and the
//! terminal-state predicate that decides when a question-answer state
//! suffices for a diagnosis.
//!
//! Terminality is defined semantically: a state is terminal when every
//! structurally valid image consistent with its answers carries the same
//! grade, and the mode's localization requirements are met. An exhaustive
//! oracle ([`brute_force_decidable`]) re-derives the same decision from
//! first principles and is kept deliberately naive.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::OnceLock;

use crate::domain::{Concept, Location, Question, Response, StateMatrix, NUM_QUESTIONS};
use crate::error::{Error, Result};

/// DME risk grade. Ordered: G0 < G1 < G2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Grade {
    G0,
    G1,
    G2,
}

impl Grade {
    pub const ALL: [Grade; 3] = [Grade::G0, Grade::G1, Grade::G2];

    pub fn as_u8(self) -> u8 {
        match self {
            Grade::G0 => 0,
            Grade::G1 => 1,
            Grade::G2 => 2,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Grade::G0),
            1 => Ok(Grade::G1),
            2 => Ok(Grade::G2),
            other => Err(Error::InvalidInput(format!("grade must be 0, 1 or 2, got {other}"))),
        }
    }

    pub fn index(self) -> usize {
        self.as_u8() as usize
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Which diagnostic assumptions apply. `ExtraUA` additionally requires the
/// fovea and the optic disc to be localized before a diagnosis counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssumptionMode {
    #[serde(rename = "simple-a")]
    SimpleA,
    #[serde(rename = "extra-u-a")]
    ExtraUA,
}

impl AssumptionMode {
    pub const BOTH: [AssumptionMode; 2] = [AssumptionMode::SimpleA, AssumptionMode::ExtraUA];

    pub fn label(self) -> &'static str {
        match self {
            AssumptionMode::SimpleA => "simple-a",
            AssumptionMode::ExtraUA => "extra-u-a",
        }
    }
}

impl fmt::Display for AssumptionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Adjacent quadrant pairs of the 2x2 tiling, as 0-based quadrant indices.
/// An anatomical disc can straddle one border, never a diagonal.
pub const ADJACENT_QUADRANT_PAIRS: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (3, 0)];

/// Annotation-level ground truth for one simulated fundus image: which
/// concept is present in which region, plus the derived grade.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthImage {
    id: String,
    /// Presence bitmask over canonical question indices; whole-image bits
    /// are the OR of the concept's quadrant bits.
    bits: u16,
    grade: Grade,
}

fn presence_bit(concept: Concept, location: Location) -> u16 {
    1 << Question::new(concept, location).index()
}

impl GroundTruthImage {
    /// Build an image from per-quadrant presence flags, deriving the
    /// whole-image row and the grade. Validates all structural invariants.
    pub fn from_quadrants(id: impl Into<String>, ex: [bool; 4], od: [bool; 4], fov: [bool; 4]) -> Result<Self> {
        let fov_count = fov.iter().filter(|&&p| p).count();
        if fov_count != 1 {
            return Err(Error::InvalidInput(format!(
                "fovea must occupy exactly one quadrant, found {fov_count}"
            )));
        }
        let od_count = od.iter().filter(|&&p| p).count();
        match od_count {
            1 => {}
            2 => {
                let adjacent = ADJACENT_QUADRANT_PAIRS.iter().any(|&(a, b)| od[a] && od[b]);
                if !adjacent {
                    return Err(Error::InvalidInput(
                        "optic disc occupies two non-adjacent quadrants".into(),
                    ));
                }
            }
            n => {
                return Err(Error::InvalidInput(format!(
                    "optic disc must occupy 1 or 2 quadrants, found {n}"
                )))
            }
        }

        let mut bits = 0u16;
        for (concept, quads) in [(Concept::HardExudate, &ex), (Concept::OpticDisc, &od), (Concept::Fovea, &fov)] {
            let mut any = false;
            for (qi, &present) in quads.iter().enumerate() {
                if present {
                    bits |= presence_bit(concept, Location::QUADRANTS[qi]);
                    any = true;
                }
            }
            if any {
                bits |= presence_bit(concept, Location::WholeImage);
            }
        }

        let fovea_quadrant = fov.iter().position(|&p| p).unwrap();
        let grade = grade_rule(&ex, fovea_quadrant);
        Ok(Self { id: id.into(), bits, grade })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// The derived DME grade.
    pub fn grade(&self) -> Grade {
        self.grade
    }

    pub fn present(&self, q: Question) -> bool {
        self.bits & (1 << q.index()) != 0
    }

    /// Raw presence bitmask in canonical question order.
    pub fn presence_bits(&self) -> u16 {
        self.bits
    }

    pub fn truthful_answer(&self, q: Question) -> Response {
        if self.present(q) {
            Response::Yes
        } else {
            Response::No
        }
    }

    pub fn quadrant_flags(&self, concept: Concept) -> [bool; 4] {
        let mut flags = [false; 4];
        for (qi, flag) in flags.iter_mut().enumerate() {
            *flag = self.present(Question::new(concept, Location::QUADRANTS[qi]));
        }
        flags
    }

    pub fn fovea_quadrant(&self) -> Location {
        Location::QUADRANTS[self.quadrant_flags(Concept::Fovea).iter().position(|&p| p).unwrap()]
    }
}

/// The assumption-based grading rule: no exudate is grade 0, exudate in the
/// fovea quadrant is grade 2, anything else is grade 1.
fn grade_rule(ex: &[bool; 4], fovea_quadrant: usize) -> Grade {
    if ex.iter().all(|&p| !p) {
        Grade::G0
    } else if ex[fovea_quadrant] {
        Grade::G2
    } else {
        Grade::G1
    }
}

/// Grade of a validated ground-truth image.
pub fn grade(img: &GroundTruthImage) -> Grade {
    img.grade()
}

/// Outcome of the terminal-state predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalDecision {
    NonTerminal,
    Terminal(Grade),
}

impl TerminalDecision {
    pub fn is_terminal(self) -> bool {
        matches!(self, TerminalDecision::Terminal(_))
    }

    pub fn grade(self) -> Option<Grade> {
        match self {
            TerminalDecision::Terminal(g) => Some(g),
            TerminalDecision::NonTerminal => None,
        }
    }
}

struct ValidImage {
    bits: u16,
    grade: Grade,
}

/// Constructive enumeration of every structurally valid image: fovea in one
/// of 4 quadrants, optic disc in one of 4 single or 4 adjacent-pair
/// placements, exudates in any of 16 quadrant subsets.
fn valid_images() -> &'static [ValidImage] {
    static IMAGES: OnceLock<Vec<ValidImage>> = OnceLock::new();
    IMAGES.get_or_init(|| {
        let mut images = Vec::with_capacity(512);
        for fovea_quadrant in 0..4usize {
            let mut fov = [false; 4];
            fov[fovea_quadrant] = true;
            let mut od_placements: Vec<[bool; 4]> = Vec::with_capacity(8);
            for single in 0..4 {
                let mut od = [false; 4];
                od[single] = true;
                od_placements.push(od);
            }
            for &(a, b) in &ADJACENT_QUADRANT_PAIRS {
                let mut od = [false; 4];
                od[a] = true;
                od[b] = true;
                od_placements.push(od);
            }
            for od in od_placements {
                for ex_bits in 0..16u16 {
                    let ex = [ex_bits & 1 != 0, ex_bits & 2 != 0, ex_bits & 4 != 0, ex_bits & 8 != 0];
                    let img = GroundTruthImage::from_quadrants("", ex, od, fov)
                        .expect("constructive enumeration only produces valid images");
                    images.push(ValidImage { bits: img.bits, grade: img.grade });
                }
            }
        }
        images
    })
}

fn localization_ok(s: &StateMatrix, mode: AssumptionMode) -> bool {
    let yes = s.yes_mask();
    let ex_all: u16 = (0..5).map(|i| 1u16 << i).sum();
    let od_quads: u16 = Location::QUADRANTS
        .iter()
        .map(|&l| 1u16 << Question::new(Concept::OpticDisc, l).index())
        .sum();
    let fov_quads: u16 = Location::QUADRANTS
        .iter()
        .map(|&l| 1u16 << Question::new(Concept::Fovea, l).index())
        .sum();
    let ex_confirmed = yes & ex_all != 0;
    let od_localized = yes & od_quads != 0;
    let fov_localized = yes & fov_quads != 0;
    match mode {
        AssumptionMode::SimpleA => !ex_confirmed || od_localized,
        AssumptionMode::ExtraUA => od_localized && fov_localized,
    }
}

/// Decide whether a state suffices for a diagnosis under the given mode.
///
/// Terminal iff (a) every valid image consistent with the state's answers
/// carries the same grade, and (b) the mode's localization requirements are
/// satisfied by confirmed quadrant answers. A whole-image "Yes" carries no
/// positional information and does not count as localization.
///
/// Errors with [`Error::InconsistentState`] when no valid image is
/// consistent with the state (possible only with contradictory answers).
pub fn is_terminal(s: &StateMatrix, mode: AssumptionMode) -> Result<TerminalDecision> {
    let yes = s.yes_mask();
    let no = s.no_mask();
    let mut seen: Option<Grade> = None;
    let mut unique = true;
    for img in valid_images() {
        if img.bits & yes == yes && img.bits & no == 0 {
            match seen {
                None => seen = Some(img.grade),
                Some(g) if g == img.grade => {}
                Some(_) => {
                    unique = false;
                    break;
                }
            }
        }
    }
    let Some(grade) = seen else {
        return Err(Error::InconsistentState);
    };
    if unique && localization_ok(s, mode) {
        Ok(TerminalDecision::Terminal(grade))
    } else {
        Ok(TerminalDecision::NonTerminal)
    }
}

// ---------------------------------------------------------------------------
// Exhaustive oracle. Filters all 2^15 boolean grids through entry-wise
// invariant checks and re-derives grade and localization with its own code.
// ---------------------------------------------------------------------------

fn oracle_grid_satisfies_invariants(bits: u16) -> bool {
    let cell = |c: usize, l: usize| bits & (1 << (c * 5 + l)) != 0;
    // whole-image bit must equal the OR of the quadrant bits
    for c in 0..3 {
        let or_quads = (1..5).any(|l| cell(c, l));
        if cell(c, 0) != or_quads {
            return false;
        }
    }
    // fovea (concept 2) in exactly one quadrant
    let fov_count = (1..5).filter(|&l| cell(2, l)).count();
    if fov_count != 1 {
        return false;
    }
    // optic disc (concept 1) in one quadrant or two adjacent ones
    let od: Vec<usize> = (1..5).filter(|&l| cell(1, l)).collect();
    match od.len() {
        1 => true,
        2 => {
            let (a, b) = (od[0] - 1, od[1] - 1);
            ADJACENT_QUADRANT_PAIRS.iter().any(|&(x, y)| (a, b) == (x, y) || (b, a) == (x, y))
        }
        _ => false,
    }
}

fn oracle_valid_grids() -> &'static [u16] {
    static GRIDS: OnceLock<Vec<u16>> = OnceLock::new();
    GRIDS.get_or_init(|| (0..(1u16 << NUM_QUESTIONS)).filter(|&b| oracle_grid_satisfies_invariants(b)).collect())
}

fn oracle_grade(bits: u16) -> Grade {
    let cell = |c: usize, l: usize| bits & (1 << (c * 5 + l)) != 0;
    let fovea_quadrant = (1..5).find(|&l| cell(2, l)).expect("valid grid has a fovea quadrant");
    let any_ex = (1..5).any(|l| cell(0, l));
    if !any_ex {
        Grade::G0
    } else if cell(0, fovea_quadrant) {
        Grade::G2
    } else {
        Grade::G1
    }
}

/// Independent oracle for [`is_terminal`]: enumerates all boolean grids
/// satisfying the image invariants, keeps those consistent with the state
/// (answer "Yes" forces presence, "No" forces absence, unasked cells are
/// unconstrained), and applies the grade-uniqueness and localization rules
/// by exhaustive check.
pub fn brute_force_decidable(s: &StateMatrix, mode: AssumptionMode) -> Result<TerminalDecision> {
    let mut grades: Vec<Grade> = Vec::new();
    for &bits in oracle_valid_grids() {
        let mut consistent = true;
        for c in Concept::ALL {
            for l in Location::ALL {
                let q = Question::new(c, l);
                let present = bits & (1 << q.index()) != 0;
                match s.get(q) {
                    Response::Yes if !present => consistent = false,
                    Response::No if present => consistent = false,
                    _ => {}
                }
            }
        }
        if consistent {
            let g = oracle_grade(bits);
            if !grades.contains(&g) {
                grades.push(g);
            }
        }
    }
    if grades.is_empty() {
        return Err(Error::InconsistentState);
    }
    if grades.len() > 1 {
        return Ok(TerminalDecision::NonTerminal);
    }

    let mut ex_confirmed = false;
    let mut od_localized = false;
    let mut fov_localized = false;
    for l in Location::ALL {
        if s.get(Question::new(Concept::HardExudate, l)) == Response::Yes {
            ex_confirmed = true;
        }
        if l.is_quadrant() {
            if s.get(Question::new(Concept::OpticDisc, l)) == Response::Yes {
                od_localized = true;
            }
            if s.get(Question::new(Concept::Fovea, l)) == Response::Yes {
                fov_localized = true;
            }
        }
    }
    let localized = match mode {
        AssumptionMode::SimpleA => !ex_confirmed || od_localized,
        AssumptionMode::ExtraUA => od_localized && fov_localized,
    };
    if localized {
        Ok(TerminalDecision::Terminal(grades[0]))
    } else {
        Ok(TerminalDecision::NonTerminal)
    }
}
