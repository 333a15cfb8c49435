//! Core vocabulary: concepts, image regions, questions, responses, histories,
//! and the order-free state encoding that question-answer histories map onto.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Number of clinical concepts that can be asked about.
pub const NUM_CONCEPTS: usize = 3;
/// Number of image regions: the whole image plus four quadrants.
pub const NUM_LOCATIONS: usize = 5;
/// Size of the full question grid.
pub const NUM_QUESTIONS: usize = NUM_CONCEPTS * NUM_LOCATIONS;

/// A clinical structure visible in a fundus image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concept {
    HardExudate,
    OpticDisc,
    Fovea,
}

impl Concept {
    /// Canonical concept order; fixes the row order of [`StateMatrix`].
    pub const ALL: [Concept; NUM_CONCEPTS] = [Concept::HardExudate, Concept::OpticDisc, Concept::Fovea];

    pub fn index(self) -> usize {
        match self {
            Concept::HardExudate => 0,
            Concept::OpticDisc => 1,
            Concept::Fovea => 2,
        }
    }

    /// Clinical shorthand used in exports and tree node labels.
    pub fn abbrev(self) -> &'static str {
        match self {
            Concept::HardExudate => "EX",
            Concept::OpticDisc => "OD",
            Concept::Fovea => "FOV",
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

/// An image region a question can refer to. The four quadrants tile the
/// image without overlap; `WholeImage` is their union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    WholeImage,
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Location {
    /// Canonical location order; fixes the column order of [`StateMatrix`].
    pub const ALL: [Location; NUM_LOCATIONS] = [
        Location::WholeImage,
        Location::Q1,
        Location::Q2,
        Location::Q3,
        Location::Q4,
    ];

    /// The four quadrants in fixed probing order.
    pub const QUADRANTS: [Location; 4] = [Location::Q1, Location::Q2, Location::Q3, Location::Q4];

    pub fn index(self) -> usize {
        match self {
            Location::WholeImage => 0,
            Location::Q1 => 1,
            Location::Q2 => 2,
            Location::Q3 => 3,
            Location::Q4 => 4,
        }
    }

    pub fn is_quadrant(self) -> bool {
        self != Location::WholeImage
    }

    /// 0-based quadrant number; `None` for the whole image.
    pub fn quadrant_index(self) -> Option<usize> {
        match self {
            Location::WholeImage => None,
            other => Some(other.index() - 1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Location::WholeImage => "whole image",
            Location::Q1 => "Q1",
            Location::Q2 => "Q2",
            Location::Q3 => "Q3",
            Location::Q4 => "Q4",
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One closed-ended question: "is `concept` present in `location`?"
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Question {
    pub concept: Concept,
    pub location: Location,
}

impl Question {
    pub fn new(concept: Concept, location: Location) -> Self {
        Self { concept, location }
    }

    /// Canonical action index: concept-major, location-minor. This ordering
    /// defines the output layout of the value network and all serializations.
    pub fn index(self) -> usize {
        self.concept.index() * NUM_LOCATIONS + self.location.index()
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < NUM_QUESTIONS, "question index out of range: {index}");
        Self {
            concept: Concept::ALL[index / NUM_LOCATIONS],
            location: Location::ALL[index % NUM_LOCATIONS],
        }
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.concept, self.location)
    }
}

/// A responder's reply to a question. `NotAsked` is the encoding of an
/// absent entry, never an answer a responder may give.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    #[default]
    NotAsked,
    No,
    Yes,
}

/// Numeric encoding of a response: unasked 0, "No" 0.5, "Yes" 1.
pub fn encode_response(r: Response) -> f64 {
    match r {
        Response::NotAsked => 0.0,
        Response::No => 0.5,
        Response::Yes => 1.0,
    }
}

/// An ordered collection of distinct questions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionSet {
    questions: Vec<Question>,
}

impl QuestionSet {
    /// The full canonical grid of all 15 questions.
    pub fn full() -> Self {
        build_question_set(&Location::ALL, &Concept::ALL).expect("canonical lists are duplicate-free")
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Question> + '_ {
        self.questions.iter().copied()
    }

    pub fn as_slice(&self) -> &[Question] {
        &self.questions
    }
}

/// Cartesian product of locations and concepts in concept-major,
/// location-minor order.
pub fn build_question_set(locations: &[Location], concepts: &[Concept]) -> Result<QuestionSet> {
    if locations.is_empty() || concepts.is_empty() {
        return Err(Error::InvalidInput("locations and concepts must be non-empty".into()));
    }
    for (i, l) in locations.iter().enumerate() {
        if locations[..i].contains(l) {
            return Err(Error::InvalidInput(format!("duplicate location {l}")));
        }
    }
    for (i, c) in concepts.iter().enumerate() {
        if concepts[..i].contains(c) {
            return Err(Error::InvalidInput(format!("duplicate concept {c}")));
        }
    }
    let mut questions = Vec::with_capacity(locations.len() * concepts.len());
    for &concept in concepts {
        for &location in locations {
            questions.push(Question::new(concept, location));
        }
    }
    Ok(QuestionSet { questions })
}

/// Bitset of already-asked questions over canonical indices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AskedSet(u16);

impl AskedSet {
    const FULL: u16 = (1 << NUM_QUESTIONS as u16) - 1;

    pub fn new() -> Self {
        Self(0)
    }

    pub fn insert(&mut self, q: Question) {
        self.0 |= 1 << q.index();
    }

    pub fn contains(&self, q: Question) -> bool {
        self.0 & (1 << q.index()) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn is_full(&self) -> bool {
        self.0 == Self::FULL
    }

    /// Unasked questions in canonical order.
    pub fn unasked(&self) -> impl Iterator<Item = Question> + '_ {
        (0..NUM_QUESTIONS).filter(|i| self.0 & (1 << i) == 0).map(Question::from_index)
    }

    pub fn iter(&self) -> impl Iterator<Item = Question> + '_ {
        (0..NUM_QUESTIONS).filter(|i| self.0 & (1 << i) != 0).map(Question::from_index)
    }
}

impl FromIterator<Question> for AskedSet {
    fn from_iter<T: IntoIterator<Item = Question>>(iter: T) -> Self {
        let mut set = Self::new();
        for q in iter {
            set.insert(q);
        }
        set
    }
}

/// An ordered history of question-response pairs. No question may repeat and
/// every stored response is an actual answer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    pairs: Vec<(Question, Response)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Question, Response)>) -> Result<Self> {
        let mut h = Self::new();
        for (q, r) in pairs {
            h.push(q, r)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, q: Question, r: Response) -> Result<()> {
        if r == Response::NotAsked {
            return Err(Error::InvalidInput(format!("history entry for {q} has no answer")));
        }
        if self.pairs.iter().any(|(prev, _)| *prev == q) {
            return Err(Error::InvalidInput(format!("question {q} appears twice in history")));
        }
        self.pairs.push((q, r));
        Ok(())
    }

    pub fn pairs(&self) -> &[(Question, Response)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Order-free encoding of a history: one response cell per question, with
/// `NotAsked` marking the questions the history never posed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct StateMatrix {
    cells: [Response; NUM_QUESTIONS],
}

impl StateMatrix {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, q: Question) -> Response {
        self.cells[q.index()]
    }

    /// Copy of the state with one cell replaced.
    pub fn with(&self, q: Question, r: Response) -> Self {
        let mut next = *self;
        next.cells[q.index()] = r;
        next
    }

    /// Questions whose cells hold an answer.
    pub fn asked(&self) -> AskedSet {
        (0..NUM_QUESTIONS)
            .filter(|&i| self.cells[i] != Response::NotAsked)
            .map(Question::from_index)
            .collect()
    }

    /// Bitmask of confirmed-present cells.
    pub fn yes_mask(&self) -> u16 {
        self.mask_of(Response::Yes)
    }

    /// Bitmask of confirmed-absent cells.
    pub fn no_mask(&self) -> u16 {
        self.mask_of(Response::No)
    }

    fn mask_of(&self, r: Response) -> u16 {
        let mut mask = 0u16;
        for (i, cell) in self.cells.iter().enumerate() {
            if *cell == r {
                mask |= 1 << i;
            }
        }
        mask
    }

    /// Flattened row-major numeric encoding, the input layout of the value
    /// network.
    pub fn to_vector(&self) -> [f64; NUM_QUESTIONS] {
        let mut v = [0.0; NUM_QUESTIONS];
        for (i, cell) in self.cells.iter().enumerate() {
            v[i] = encode_response(*cell);
        }
        v
    }

    /// Flat CSV row of the 15 encoded values in canonical order.
    pub fn to_csv_row(&self) -> String {
        self.to_vector()
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Project a history onto its order-free state encoding.
pub fn state_from_history(h: &History) -> StateMatrix {
    let mut s = StateMatrix::empty();
    for &(q, r) in h.pairs() {
        s.cells[q.index()] = r;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_grid_has_fifteen_questions() {
        let qs = QuestionSet::full();
        assert_eq!(qs.len(), NUM_QUESTIONS);
        // concept-major order: first five questions are all hard-exudate ones
        assert!(qs.as_slice()[..5].iter().all(|q| q.concept == Concept::HardExudate));
        assert_eq!(qs.as_slice()[0].location, Location::WholeImage);
    }

    #[test]
    fn singleton_product() {
        let qs = build_question_set(&[Location::Q2], &[Concept::Fovea]).unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs.as_slice()[0], Question::new(Concept::Fovea, Location::Q2));
    }

    #[test]
    fn two_by_three_product_is_concept_major() {
        let qs = build_question_set(&[Location::Q1, Location::Q3], &Concept::ALL).unwrap();
        assert_eq!(qs.len(), 6);
        let concepts: Vec<_> = qs.iter().map(|q| q.concept).collect();
        assert_eq!(
            concepts,
            vec![
                Concept::HardExudate,
                Concept::HardExudate,
                Concept::OpticDisc,
                Concept::OpticDisc,
                Concept::Fovea,
                Concept::Fovea
            ]
        );
    }

    #[test]
    fn duplicate_inputs_rejected() {
        assert!(build_question_set(&[Location::Q1, Location::Q1], &Concept::ALL).is_err());
        assert!(build_question_set(&Location::ALL, &[Concept::Fovea, Concept::Fovea]).is_err());
    }

    #[test]
    fn response_encoding() {
        assert_eq!(encode_response(Response::NotAsked), 0.0);
        assert_eq!(encode_response(Response::No), 0.5);
        assert_eq!(encode_response(Response::Yes), 1.0);
    }

    #[test]
    fn question_index_round_trip() {
        for i in 0..NUM_QUESTIONS {
            assert_eq!(Question::from_index(i).index(), i);
        }
    }

    #[test]
    fn empty_history_maps_to_zero_state() {
        let s = state_from_history(&History::new());
        assert_eq!(s.to_vector(), [0.0; NUM_QUESTIONS]);
    }

    #[test]
    fn single_answer_sets_single_cell() {
        let q = Question::new(Concept::HardExudate, Location::WholeImage);
        let h = History::from_pairs([(q, Response::Yes)]).unwrap();
        let s = state_from_history(&h);
        assert_eq!(s.get(q), Response::Yes);
        assert_eq!(s.asked().len(), 1);
        assert_eq!(s.to_vector()[q.index()], 1.0);
    }

    #[test]
    fn duplicate_question_in_history_rejected() {
        let q = Question::new(Concept::Fovea, Location::Q1);
        let err = History::from_pairs([(q, Response::Yes), (q, Response::No)]);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn not_asked_is_not_a_valid_answer() {
        let q = Question::new(Concept::Fovea, Location::Q1);
        assert!(History::from_pairs([(q, Response::NotAsked)]).is_err());
    }

    #[test]
    fn csv_row_formats_cells_in_canonical_order() {
        let q = Question::new(Concept::HardExudate, Location::Q1);
        let s = StateMatrix::empty().with(q, Response::No);
        assert_eq!(s.to_csv_row(), "0,0.5,0,0,0,0,0,0,0,0,0,0,0,0,0");
    }

    fn arb_history() -> impl Strategy<Value = History> {
        // random subset of questions with random answers
        (proptest::sample::subsequence((0..NUM_QUESTIONS).collect::<Vec<_>>(), 0..=NUM_QUESTIONS), any::<u64>())
            .prop_map(|(indices, seed)| {
                let mut h = History::new();
                for (k, i) in indices.iter().enumerate() {
                    let r = if (seed >> (k % 64)) & 1 == 1 { Response::Yes } else { Response::No };
                    h.push(Question::from_index(*i), r).unwrap();
                }
                h
            })
    }

    proptest! {
        #[test]
        fn state_is_permutation_invariant(h in arb_history(), perm_seed in any::<u64>()) {
            let mut pairs = h.pairs().to_vec();
            // deterministic pseudo-shuffle
            let n = pairs.len();
            if n > 1 {
                for i in (1..n).rev() {
                    let j = (crate::rng::mix(&[perm_seed, i as u64]) % (i as u64 + 1)) as usize;
                    pairs.swap(i, j);
                }
            }
            let shuffled = History::from_pairs(pairs).unwrap();
            prop_assert_eq!(state_from_history(&h), state_from_history(&shuffled));
        }

        #[test]
        fn asked_pairs_recoverable_from_state(h in arb_history()) {
            let s = state_from_history(&h);
            let mut recovered: Vec<(Question, Response)> = s
                .asked()
                .iter()
                .map(|q| (q, s.get(q)))
                .collect();
            recovered.sort_by_key(|(q, _)| q.index());
            let mut original = h.pairs().to_vec();
            original.sort_by_key(|(q, _)| q.index());
            prop_assert_eq!(recovered, original);
        }
    }
}
