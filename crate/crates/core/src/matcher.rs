//! Association of per-camera observations to tracked people.
//!
//! Each observation carries a hue/saturation histogram of its region of
//! interest. An observation matches a person when the median Bhattacharyya
//! distance to the person's recent histograms is below `d_max`. New people
//! start as candidates and are confirmed after being matched for
//! `confirm_seconds`; anyone unmatched for longer than `expire_seconds` is
//! dropped.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{FrameBatch, Observation};

pub const HUE_BINS: usize = 16;
pub const SATURATION_BINS: usize = 16;
pub const HISTOGRAM_BINS: usize = HUE_BINS * SATURATION_BINS;

const MASS_TOL: f64 = 1e-9;
// 1 - BC below this is rounding noise from summing normalized bins.
const COEFFICIENT_SNAP: f64 = 1e-12;

/// Normalized 16×16 hue/saturation histogram, bin index `hue * 16 + sat`.
///
/// Serialized sparsely as `[[bin, weight], ...]` over the non-zero bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    bins: Box<[f64; HISTOGRAM_BINS]>,
}

impl Histogram2D {
    pub fn empty() -> Self {
        Histogram2D {
            bins: Box::new([0.0; HISTOGRAM_BINS]),
        }
    }

    /// Validates an already-normalized bin vector.
    pub fn from_bins(bins: &[f64]) -> Result<Self> {
        if bins.len() != HISTOGRAM_BINS {
            return Err(Error::Validation(format!(
                "histogram needs {HISTOGRAM_BINS} bins, got {}",
                bins.len()
            )));
        }
        let mut h = Self::empty();
        h.bins.copy_from_slice(bins);
        h.validate()?;
        Ok(h)
    }

    /// Normalizes arbitrary non-negative weights. All-zero input stays empty.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.len() != HISTOGRAM_BINS || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Validation("histogram weights must be 256 finite non-negative values".into()));
        }
        let total: f64 = weights.iter().sum();
        let mut h = Self::empty();
        if total > 0.0 {
            for (dst, w) in h.bins.iter_mut().zip(weights) {
                *dst = w / total;
            }
        }
        Ok(h)
    }

    /// Bins hue (degrees, wrapped into [0, 360)) and saturation ([0, 1])
    /// samples from a region of interest.
    pub fn from_hue_saturation(samples: &[(f64, f64)]) -> Self {
        let mut counts = [0.0; HISTOGRAM_BINS];
        for &(hue, sat) in samples {
            if !hue.is_finite() || !sat.is_finite() {
                continue;
            }
            let h = ((hue.rem_euclid(360.0) / 360.0) * HUE_BINS as f64) as usize;
            let s = (sat.clamp(0.0, 1.0) * SATURATION_BINS as f64) as usize;
            counts[h.min(HUE_BINS - 1) * SATURATION_BINS + s.min(SATURATION_BINS - 1)] += 1.0;
        }
        Self::from_weights(&counts).expect("counts are valid weights")
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins.iter().any(|b| *b < 0.0 || !b.is_finite()) {
            return Err(Error::Validation("histogram bins must be finite and non-negative".into()));
        }
        let total = self.mass();
        if total != 0.0 && (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Validation(format!("histogram mass {total} is neither 0 nor 1")));
        }
        Ok(())
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins[..]
    }

    pub fn mass(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.iter().all(|b| *b == 0.0)
    }
}

impl Default for Histogram2D {
    fn default() -> Self {
        Self::empty()
    }
}

impl Serialize for Histogram2D {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let sparse: Vec<(usize, f64)> = self
            .bins
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i, *w))
            .collect();
        sparse.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Histogram2D {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let sparse = Vec::<(usize, f64)>::deserialize(d)?;
        let mut h = Histogram2D::empty();
        for (bin, w) in sparse {
            let slot = h
                .bins
                .get_mut(bin)
                .ok_or_else(|| D::Error::custom(format!("histogram bin {bin} out of range")))?;
            if *slot != 0.0 {
                return Err(D::Error::custom(format!("histogram bin {bin} listed twice")));
            }
            *slot = w;
        }
        h.validate().map_err(D::Error::custom)?;
        Ok(h)
    }
}

/// Hellinger form of the Bhattacharyya distance, `sqrt(1 - Σ sqrt(a_i b_i))`,
/// bounded in [0, 1]. An empty histogram is maximally distant from anything.
pub fn bhattacharyya_distance(a: &Histogram2D, b: &Histogram2D) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let coefficient: f64 = a
        .bins
        .iter()
        .zip(b.bins.iter())
        .map(|(x, y)| (x * y).sqrt())
        .sum();
    let gap = 1.0 - coefficient;
    if gap < COEFFICIENT_SNAP {
        0.0
    } else {
        gap.sqrt().min(1.0)
    }
}

/// Median with the mean-of-central-pair convention for even lengths.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    pub d_max: f64,
    pub confirm_seconds: f64,
    pub expire_seconds: f64,
    /// Number of most recent histograms the median runs over.
    pub history_depth: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            d_max: 0.65,
            confirm_seconds: 2.0,
            expire_seconds: 2.0,
            history_depth: 10,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_max > 0.0 && self.d_max < 1.0) {
            return Err(Error::Config(format!("d_max {} outside (0, 1)", self.d_max)));
        }
        if !(self.confirm_seconds > 0.0 && self.expire_seconds > 0.0) {
            return Err(Error::Config("confirm/expire windows must be positive".into()));
        }
        if self.history_depth == 0 {
            return Err(Error::Config("history_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Candidate,
    Confirmed,
    Expired,
}

pub type PersonId = u64;

#[derive(Debug, Clone)]
pub struct PersonTrack {
    pub person_id: PersonId,
    pub status: TrackStatus,
    /// Per-camera observation history, oldest first, at most
    /// `history_depth` entries each.
    pub history: BTreeMap<u32, VecDeque<Observation>>,
    pub first_seen: f64,
    pub last_matched: f64,
}

impl PersonTrack {
    fn new(person_id: PersonId, obs: Observation, depth: usize) -> Self {
        let t = obs.timestamp;
        let mut track = PersonTrack {
            person_id,
            status: TrackStatus::Candidate,
            history: BTreeMap::new(),
            first_seen: t,
            last_matched: t,
        };
        track.push(obs, depth);
        track
    }

    fn push(&mut self, obs: Observation, depth: usize) {
        self.last_matched = self.last_matched.max(obs.timestamp);
        let queue = self.history.entry(obs.camera_id).or_default();
        queue.push_back(obs);
        while queue.len() > depth {
            queue.pop_front();
        }
    }

    /// Histograms of the `depth` most recent observations over all cameras.
    fn recent_histograms(&self, depth: usize) -> Vec<&crate::matcher::Histogram2D> {
        let mut all: Vec<&Observation> = self.history.values().flatten().collect();
        all.sort_by(|a, b| b.timestamp.total_cmp(&a.timestamp).then(a.camera_id.cmp(&b.camera_id)));
        all.into_iter().take(depth).map(|o| &o.histogram).collect()
    }

    pub fn observation_count(&self) -> usize {
        self.history.values().map(VecDeque::len).sum()
    }
}

/// Median distance between an observation and the person's recent history.
pub fn observation_distance(obs: &Observation, track: &PersonTrack, cfg: &MatcherConfig) -> Result<f64> {
    let recent = track.recent_histograms(cfg.history_depth);
    let mut distances: Vec<f64> = recent
        .into_iter()
        .map(|h| bhattacharyya_distance(&obs.histogram, h))
        .collect();
    median(&mut distances)
        .ok_or_else(|| Error::Matcher(format!("person {} has no history", track.person_id)))
}

/// Most recent observation from every camera that has seen the person,
/// ordered by camera id.
pub fn latest_views(track: &PersonTrack, num_cameras: usize) -> Result<Vec<&Observation>> {
    let views: Vec<&Observation> = track
        .history
        .values()
        .filter_map(|q| q.iter().max_by(|a, b| a.timestamp.total_cmp(&b.timestamp)))
        .collect();
    if views.is_empty() {
        return Err(Error::Matcher(format!("person {} has no history", track.person_id)));
    }
    if views.len() > num_cameras {
        return Err(Error::Matcher(format!(
            "person {} seen by {} cameras, rig has {num_cameras}",
            track.person_id,
            views.len()
        )));
    }
    Ok(views)
}

/// Share of labelled observations whose track and identity label map to
/// each other by majority vote in both directions. Splitting one person over
/// several tracks, or merging several people into one, lowers the score.
pub fn association_accuracy(assignments: &[(u32, PersonId)]) -> f64 {
    if assignments.is_empty() {
        return 1.0;
    }
    let mut counts: BTreeMap<(u32, PersonId), usize> = BTreeMap::new();
    for &(label, track) in assignments {
        *counts.entry((label, track)).or_default() += 1;
    }
    let mut best_label: BTreeMap<PersonId, (usize, u32)> = BTreeMap::new();
    let mut best_track: BTreeMap<u32, (usize, PersonId)> = BTreeMap::new();
    for (&(label, track), &n) in &counts {
        let e = best_label.entry(track).or_insert((0, label));
        if n > e.0 {
            *e = (n, label);
        }
        let e = best_track.entry(label).or_insert((0, track));
        if n > e.0 {
            *e = (n, track);
        }
    }
    let correct = assignments
        .iter()
        .filter(|(label, track)| best_label[track].1 == *label && best_track[label].1 == *track)
        .count();
    correct as f64 / assignments.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackEventKind {
    Created,
    Confirmed,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackEvent {
    pub track: PersonId,
    pub event: TrackEventKind,
    pub t: f64,
}

/// Outcome of one matcher step.
#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    pub events: Vec<TrackEvent>,
    /// `(observation index in the frame, assigned person)`, one entry per
    /// observation.
    pub assignments: Vec<(usize, PersonId)>,
}

/// The matcher state machine. Single owner; `step` calls must be serialized.
#[derive(Debug, Clone)]
pub struct Matcher {
    cfg: MatcherConfig,
    tracks: BTreeMap<PersonId, PersonTrack>,
    next_id: PersonId,
    last_time: Option<f64>,
}

impl Matcher {
    pub fn new(cfg: MatcherConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Matcher {
            cfg,
            tracks: BTreeMap::new(),
            next_id: 0,
            last_time: None,
        })
    }

    pub fn config(&self) -> &MatcherConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> impl Iterator<Item = &PersonTrack> {
        self.tracks.values()
    }

    pub fn track(&self, id: PersonId) -> Option<&PersonTrack> {
        self.tracks.get(&id)
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &PersonTrack> {
        self.tracks.values().filter(|t| t.status == TrackStatus::Confirmed)
    }

    pub fn step(&mut self, frame: &FrameBatch) -> Result<StepOutput> {
        let now = frame.timestamp;
        if !now.is_finite() {
            return Err(Error::Matcher("frame timestamp is not finite".into()));
        }
        if let Some(last) = self.last_time {
            if now < last {
                return Err(Error::Matcher(format!("frame time {now} precedes {last}")));
            }
        }
        self.last_time = Some(now);
        let mut out = StepOutput::default();

        let expired: Vec<PersonId> = self
            .tracks
            .values()
            .filter(|t| now - t.last_matched > self.cfg.expire_seconds)
            .map(|t| t.person_id)
            .collect();
        for id in expired {
            let mut track = self.tracks.remove(&id).expect("listed above");
            track.status = TrackStatus::Expired;
            out.events.push(TrackEvent {
                track: id,
                event: TrackEventKind::Expired,
                t: now,
            });
        }

        let mut pairs = Vec::new();
        for (oi, obs) in frame.observations.iter().enumerate() {
            for track in self.tracks.values() {
                let d = observation_distance(obs, track, &self.cfg)?;
                if d < self.cfg.d_max {
                    pairs.push((d, track.person_id, oi));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut assigned: Vec<Option<PersonId>> = vec![None; frame.observations.len()];
        let mut used_slots = std::collections::BTreeSet::new();
        for (_, pid, oi) in pairs {
            let camera = frame.observations[oi].camera_id;
            if assigned[oi].is_none() && !used_slots.contains(&(pid, camera)) {
                assigned[oi] = Some(pid);
                used_slots.insert((pid, camera));
            }
        }

        // Unmatched observations from different cameras in the same frame may
        // belong to one new person.
        let mut created: Vec<PersonId> = Vec::new();
        let mut matched_tracks = std::collections::BTreeSet::new();
        for (oi, slot) in assigned.iter_mut().enumerate() {
            let obs = frame.observations[oi].clone();
            let pid = match *slot {
                Some(pid) => {
                    self.tracks
                        .get_mut(&pid)
                        .expect("assigned to a live track")
                        .push(obs, self.cfg.history_depth);
                    matched_tracks.insert(pid);
                    pid
                }
                None => {
                    let mut joined = None;
                    for &pid in &created {
                        let track = &self.tracks[&pid];
                        if used_slots.contains(&(pid, obs.camera_id)) {
                            continue;
                        }
                        let d = observation_distance(&obs, track, &self.cfg)?;
                        if d < self.cfg.d_max && joined.is_none_or(|(best, _)| d < best) {
                            joined = Some((d, pid));
                        }
                    }
                    if let Some((_, pid)) = joined {
                        used_slots.insert((pid, obs.camera_id));
                        self.tracks
                            .get_mut(&pid)
                            .expect("created this frame")
                            .push(obs, self.cfg.history_depth);
                        pid
                    } else {
                        let pid = self.next_id;
                        self.next_id += 1;
                        used_slots.insert((pid, obs.camera_id));
                        created.push(pid);
                        self.tracks
                            .insert(pid, PersonTrack::new(pid, obs, self.cfg.history_depth));
                        out.events.push(TrackEvent {
                            track: pid,
                            event: TrackEventKind::Created,
                            t: now,
                        });
                        pid
                    }
                }
            };
            *slot = Some(pid);
            out.assignments.push((oi, pid));
        }

        for pid in matched_tracks {
            let track = self.tracks.get_mut(&pid).expect("live track");
            if track.status == TrackStatus::Candidate
                && track.last_matched - track.first_seen >= self.cfg.confirm_seconds
            {
                track.status = TrackStatus::Confirmed;
                out.events.push(TrackEvent {
                    track: pid,
                    event: TrackEventKind::Confirmed,
                    t: now,
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{JointDetection, JointId};

    fn hist(weights: &[(usize, f64)]) -> Histogram2D {
        let mut w = vec![0.0; HISTOGRAM_BINS];
        for &(i, v) in weights {
            w[i] = v;
        }
        Histogram2D::from_weights(&w).unwrap()
    }

    fn obs(camera: u32, t: f64, h: Histogram2D) -> Observation {
        Observation {
            camera_id: camera,
            timestamp: t,
            person: None,
            joints: vec![JointDetection {
                joint: JointId::Nose,
                u: 10.0,
                v: 10.0,
                score: 1.0,
                xyz: None,
            }],
            histogram: h,
        }
    }

    fn frame(t: f64, observations: Vec<Observation>) -> FrameBatch {
        FrameBatch {
            timestamp: t,
            observations,
        }
    }

    #[test]
    fn distance_examples() {
        let a = hist(&[(0, 0.5), (1, 0.5)]);
        let b = hist(&[(0, 1.0)]);
        assert_eq!(bhattacharyya_distance(&a, &a), 0.0);
        assert_eq!(bhattacharyya_distance(&a, &hist(&[(7, 1.0)])), 1.0);
        let expected = (1.0 - 0.5f64.sqrt()).sqrt();
        assert!((bhattacharyya_distance(&a, &b) - expected).abs() < 1e-15);
        assert!((expected - 0.5412).abs() < 5e-5);
        assert_eq!(bhattacharyya_distance(&a, &Histogram2D::empty()), 1.0);
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&mut [0.9, 0.2, 0.4]), Some(0.4));
        assert_eq!(median(&mut [0.8, 0.2]), Some(0.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn observation_distance_uses_recent_history() {
        let cfg = MatcherConfig {
            history_depth: 2,
            ..Default::default()
        };
        let a = hist(&[(0, 1.0)]);
        let b = hist(&[(1, 1.0)]);
        let mut track = PersonTrack::new(0, obs(1, 0.0, b.clone()), 2);
        track.push(obs(1, 1.0, a.clone()), 2);
        track.push(obs(2, 2.0, a.clone()), 2);
        // oldest entry (b) falls outside the two most recent samples
        assert_eq!(observation_distance(&obs(1, 3.0, a.clone()), &track, &cfg).unwrap(), 0.0);
        let single = PersonTrack::new(1, obs(1, 0.0, a.clone()), 10);
        assert_eq!(observation_distance(&obs(1, 0.1, a), &single, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn histogram_validation() {
        assert!(Histogram2D::from_bins(&[0.5; HISTOGRAM_BINS]).is_err());
        assert!(Histogram2D::from_bins(&[0.0; 3]).is_err());
        let h = Histogram2D::from_hue_saturation(&[(10.0, 0.5), (370.0, 0.5), (200.0, 1.0)]);
        assert!((h.mass() - 1.0).abs() < 1e-12);
        assert!((h.bins()[8] - 2.0 / 3.0).abs() < 1e-12);
        let text = serde_json::to_string(&h).unwrap();
        assert_eq!(serde_json::from_str::<Histogram2D>(&text).unwrap(), h);
        assert!(serde_json::from_str::<Histogram2D>("[[0, 0.5]]").is_err());
        assert!(serde_json::from_str::<Histogram2D>("[[300, 1.0]]").is_err());
    }

    #[test]
    fn first_observation_creates_candidate() {
        let mut m = Matcher::new(MatcherConfig::default()).unwrap();
        let out = m.step(&frame(0.0, vec![obs(1, 0.0, hist(&[(0, 1.0)]))])).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].event, TrackEventKind::Created);
        assert_eq!(m.confirmed().count(), 0);
        assert_eq!(m.tracks().next().unwrap().status, TrackStatus::Candidate);
    }

    #[test]
    fn candidate_confirms_after_window_and_expires_after_absence() {
        let mut m = Matcher::new(MatcherConfig::default()).unwrap();
        let h = hist(&[(3, 0.7), (4, 0.3)]);
        let mut confirmed_at = None;
        for k in 0..=31 {
            let t = k as f64 / 15.0;
            let out = m.step(&frame(t, vec![obs(1, t, h.clone())])).unwrap();
            if out.events.iter().any(|e| e.event == TrackEventKind::Confirmed) {
                confirmed_at.get_or_insert(t);
            }
        }
        let t = confirmed_at.expect("confirmed within 2.1 s");
        assert!(t >= 2.0);
        assert_eq!(m.confirmed().count(), 1);

        let last = 31.0 / 15.0;
        let out = m.step(&frame(last + 1.95, vec![])).unwrap();
        assert!(out.events.is_empty());
        let out = m.step(&frame(last + 2.1, vec![])).unwrap();
        assert_eq!(out.events[0].event, TrackEventKind::Expired);
        assert_eq!(m.tracks().count(), 0);
    }

    #[test]
    fn decreasing_time_is_an_error() {
        let mut m = Matcher::new(MatcherConfig::default()).unwrap();
        m.step(&frame(1.0, vec![])).unwrap();
        assert!(m.step(&frame(0.5, vec![])).is_err());
    }

    #[test]
    fn one_observation_per_track_per_camera() {
        let mut m = Matcher::new(MatcherConfig::default()).unwrap();
        let h = hist(&[(0, 1.0)]);
        m.step(&frame(0.0, vec![obs(1, 0.0, h.clone())])).unwrap();
        let out = m
            .step(&frame(0.1, vec![obs(1, 0.1, h.clone()), obs(1, 0.1, h.clone()), obs(2, 0.1, h)]))
            .unwrap();
        let ids: Vec<_> = out.assignments.iter().map(|a| a.1).collect();
        assert_eq!(ids[0], 0);
        assert_ne!(ids[1], 0, "same camera cannot feed one track twice");
        assert_eq!(ids[2], 0);
    }

    #[test]
    fn latest_views_per_camera() {
        let h = hist(&[(0, 1.0)]);
        let mut track = PersonTrack::new(0, obs(1, 5.0, h.clone()), 10);
        track.push(obs(1, 9.0, h.clone()), 10);
        track.push(obs(2, 6.0, h.clone()), 10);
        track.push(obs(3, 7.0, h.clone()), 10);
        let views = latest_views(&track, 3).unwrap();
        assert_eq!(views.len(), 3);
        assert_eq!(views[0].timestamp, 9.0);
        let single = PersonTrack::new(1, obs(2, 1.0, h), 10);
        assert_eq!(latest_views(&single, 3).unwrap().len(), 1);
        let mut empty = single.clone();
        empty.history.clear();
        assert!(latest_views(&empty, 3).is_err());
    }
}
