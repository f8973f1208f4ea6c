//! Request workloads: truncated Zipf popularity, popularity shifts, and
//! reproducible request traces.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::rng::{SimRng, STREAM_SHIFTS};

/// Lower end of the exponent range searched by [`calibrate_zipf`].
pub const CALIBRATION_S_MIN: f64 = 0.01;
/// Upper end of the exponent range searched by [`calibrate_zipf`].
pub const CALIBRATION_S_MAX: f64 = 10.0;
/// Bisection resolution on the exponent.
pub const CALIBRATION_RESOLUTION: f64 = 1e-6;

// Cumulative sums that miss the traffic share by rounding alone still count.
const SHARE_SLACK: f64 = 1e-12;

/// A content identifier in `1..=M`. Zero is reserved so that the log
/// encoding of identifiers never sees it.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentId(u32);

impl ContentId {
    pub fn new(id: u32) -> Option<Self> {
        (id != 0).then_some(ContentId(id))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based index, `id - 1`.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub(crate) fn from_index(index: usize) -> Self {
        ContentId(index as u32 + 1)
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Normalised truncated Zipf probabilities indexed by rank (entry 0 is rank 1).
pub fn zipf_pmf(m: usize, s: f64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::invalid("catalog size M must be >= 1"));
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::invalid(format!("Zipf exponent must be > 0, got {s}")));
    }
    let weights: Vec<f64> = (1..=m).map(|r| (r as f64).powf(-s)).collect();
    // Summing from the smallest term keeps the normaliser accurate for large M.
    let total: f64 = weights.iter().rev().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Truncated Zipf popularity over `M` contents with a mutable identity-to-rank
/// assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct PopularityModel {
    exponent: f64,
    pmf_by_rank: Vec<f64>,
    cdf_by_rank: Vec<f64>,
    /// `rank_of[id - 1]` is the 1-based rank of content `id`.
    rank_of: Vec<u32>,
    /// `id_at_rank[r - 1]` is the content holding rank `r`.
    id_at_rank: Vec<ContentId>,
}

impl PopularityModel {
    /// Model with the identity assignment: content `k` has rank `k`.
    pub fn new(m: usize, s: f64) -> Result<Self> {
        let pmf_by_rank = zipf_pmf(m, s)?;
        let mut cdf_by_rank = Vec::with_capacity(m);
        let mut acc = 0.0;
        for p in &pmf_by_rank {
            acc += p;
            cdf_by_rank.push(acc);
        }
        Ok(PopularityModel {
            exponent: s,
            pmf_by_rank,
            cdf_by_rank,
            rank_of: (1..=m as u32).collect(),
            id_at_rank: (0..m).map(ContentId::from_index).collect(),
        })
    }

    pub fn catalog_size(&self) -> usize {
        self.pmf_by_rank.len()
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Probabilities in rank order (non-increasing).
    pub fn pmf_by_rank(&self) -> &[f64] {
        &self.pmf_by_rank
    }

    /// Probabilities indexed by content (entry `id - 1`).
    pub fn pmf_by_id(&self) -> Vec<f64> {
        self.rank_of
            .iter()
            .map(|&r| self.pmf_by_rank[r as usize - 1])
            .collect()
    }

    pub fn pmf(&self, id: ContentId) -> f64 {
        self.pmf_by_rank[self.rank(id) as usize - 1]
    }

    pub fn rank(&self, id: ContentId) -> u32 {
        self.rank_of[id.index()]
    }

    /// Rank permutation, `rank_of()[id - 1]` is the rank of `id`.
    pub fn rank_of(&self) -> &[u32] {
        &self.rank_of
    }

    pub fn content_at_rank(&self, rank: u32) -> ContentId {
        self.id_at_rank[rank as usize - 1]
    }

    /// Top `k` contents by popularity, most popular first.
    pub fn top(&self, k: usize) -> &[ContentId] {
        &self.id_at_rank[..k.min(self.id_at_rank.len())]
    }

    /// Probability mass of the `k` most popular contents.
    pub fn top_mass(&self, k: usize) -> f64 {
        self.pmf_by_rank[..k.min(self.pmf_by_rank.len())]
            .iter()
            .sum()
    }

    /// Draw one request. Deterministic given the generator state.
    pub fn sample(&self, rng: &mut SimRng) -> ContentId {
        let u = rng.uniform();
        let rank = self
            .cdf_by_rank
            .partition_point(|&c| c <= u)
            .min(self.cdf_by_rank.len() - 1);
        self.id_at_rank[rank]
    }

    /// Reassign popularity. `permutation[r - 1]` is the new rank of the
    /// content currently holding rank `r`; the pmf shape is untouched.
    pub fn apply_shift(&self, permutation: &[u32]) -> Result<Self> {
        check_permutation(permutation, self.catalog_size())?;
        let mut next = self.clone();
        for (id_index, rank) in self.rank_of.iter().enumerate() {
            let new_rank = permutation[*rank as usize - 1];
            next.rank_of[id_index] = new_rank;
            next.id_at_rank[new_rank as usize - 1] = ContentId::from_index(id_index);
        }
        Ok(next)
    }
}

/// Convenience wrapper matching the operation name used throughout the docs.
pub fn sample_request(model: &PopularityModel, rng: &mut SimRng) -> ContentId {
    model.sample(rng)
}

pub fn apply_shift(model: &PopularityModel, permutation: &[u32]) -> Result<PopularityModel> {
    model.apply_shift(permutation)
}

fn check_permutation(permutation: &[u32], m: usize) -> Result<()> {
    if permutation.len() != m {
        return Err(Error::invalid(format!(
            "permutation has {} entries, expected {m}",
            permutation.len()
        )));
    }
    let mut seen = vec![false; m];
    for &p in permutation {
        if p == 0 || p as usize > m {
            return Err(Error::invalid(format!("permutation entry {p} outside 1..={m}")));
        }
        if std::mem::replace(&mut seen[p as usize - 1], true) {
            return Err(Error::invalid(format!("permutation repeats {p}")));
        }
    }
    Ok(())
}

/// Smallest fraction of the catalog whose most popular members carry at least
/// `traffic_share` of the requests.
pub fn effective_contents(model: &PopularityModel, traffic_share: f64) -> Result<f64> {
    effective_contents_of(model.pmf_by_rank(), traffic_share)
}

/// [`effective_contents`] over a rank-ordered pmf.
pub fn effective_contents_of(pmf_by_rank: &[f64], traffic_share: f64) -> Result<f64> {
    if !(traffic_share > 0.0 && traffic_share <= 1.0) {
        return Err(Error::invalid(format!(
            "traffic share must be in (0, 1], got {traffic_share}"
        )));
    }
    let m = pmf_by_rank.len();
    let mut acc = 0.0;
    for (k, p) in pmf_by_rank.iter().enumerate() {
        acc += p;
        if acc >= traffic_share - SHARE_SLACK {
            return Ok((k + 1) as f64 / m as f64);
        }
    }
    Ok(1.0)
}

/// Bisection for the Zipf exponent whose effective-contents fraction is
/// closest to `target_effective`.
///
/// A target flatter than anything reachable at [`CALIBRATION_S_MIN`] returns
/// that limit exponent. A target more head-heavy than reachable at
/// [`CALIBRATION_S_MAX`] is a calibration failure.
pub fn calibrate_zipf(m: usize, target_effective: f64, traffic_share: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("catalog size M must be >= 1"));
    }
    if !(target_effective >= 1.0 / m as f64 && target_effective <= 1.0) {
        return Err(Error::invalid(format!(
            "effective-contents target must be in [1/M, 1], got {target_effective}"
        )));
    }
    let eff = |s: f64| -> Result<f64> { effective_contents_of(&zipf_pmf(m, s)?, traffic_share) };

    let mut lo = CALIBRATION_S_MIN;
    let mut hi = CALIBRATION_S_MAX;
    let eff_lo = eff(lo)?;
    if eff_lo <= target_effective {
        return Ok(lo);
    }
    let eff_hi = eff(hi)?;
    if eff_hi > target_effective {
        return Err(Error::Calibration {
            target: target_effective,
            achieved: eff_hi,
            exponent: hi,
        });
    }
    // Invariant: eff(lo) > target >= eff(hi).
    let (mut e_lo, mut e_hi) = (eff_lo, eff_hi);
    while hi - lo > CALIBRATION_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        let e = eff(mid)?;
        if e > target_effective {
            lo = mid;
            e_lo = e;
        } else {
            hi = mid;
            e_hi = e;
        }
    }
    if (e_lo - target_effective).abs() < (target_effective - e_hi).abs() {
        Ok(lo)
    } else {
        Ok(hi)
    }
}

/// What happens at a scheduled shift.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shift {
    /// Uniformly random permutation drawn from the trace seed.
    Random,
    /// Explicit rank permutation, `perm[r - 1]` is the new rank of rank `r`.
    Permutation(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftEvent {
    pub step: u64,
    pub shift: Shift,
}

/// Ordered popularity-shift events.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ShiftSchedule {
    events: Vec<ShiftEvent>,
}

impl ShiftSchedule {
    pub fn new(events: Vec<ShiftEvent>) -> Result<Self> {
        for pair in events.windows(2) {
            if pair[1].step <= pair[0].step {
                return Err(Error::invalid(format!(
                    "shift steps must be strictly increasing ({} then {})",
                    pair[0].step, pair[1].step
                )));
            }
        }
        for e in &events {
            if let Shift::Permutation(p) = &e.shift {
                check_permutation(p, p.len())?;
            }
        }
        Ok(ShiftSchedule { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[ShiftEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Check every explicit permutation against the catalog size.
    pub fn validate_for(&self, m: usize) -> Result<()> {
        for e in &self.events {
            if let Shift::Permutation(p) = &e.shift {
                check_permutation(p, m)?;
            }
        }
        Ok(())
    }

    /// Parse the schedule file format: one event per line,
    /// `<step_index> random` or `<step_index> <permutation...>`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut events = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let step: u64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::parse(line_no, "expected a step index"))?;
            let rest: Vec<&str> = fields.collect();
            let shift = match rest.as_slice() {
                [] => return Err(Error::parse(line_no, "missing `random` or permutation")),
                ["random"] => Shift::Random,
                entries => Shift::Permutation(
                    entries
                        .iter()
                        .map(|e| e.parse::<u32>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::parse(line_no, format!("bad permutation entry: {e}")))?,
                ),
            };
            let event = ShiftEvent { step, shift };
            // Validate against the previous event so errors carry this line.
            let pair: Vec<ShiftEvent> = events.last().cloned().into_iter().chain([event.clone()]).collect();
            Self::new(pair).map_err(|e| match e {
                Error::InvalidParameter(msg) => Error::parse(line_no, msg),
                other => other,
            })?;
            events.push(event);
        }
        Self::new(events)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            match &e.shift {
                Shift::Random => out.push_str(&format!("{} random\n", e.step)),
                Shift::Permutation(p) => {
                    let body: Vec<String> = p.iter().map(u32::to_string).collect();
                    out.push_str(&format!("{} {}\n", e.step, body.join(" ")));
                }
            }
        }
        out
    }
}

/// Permutation swapping ranks `a` and `b`.
pub fn swap_permutation(m: usize, a: u32, b: u32) -> Vec<u32> {
    let mut p: Vec<u32> = (1..=m as u32).collect();
    p.swap(a as usize - 1, b as usize - 1);
    p
}

/// Permutation reversing the popularity order.
pub fn reversal_permutation(m: usize) -> Vec<u32> {
    (1..=m as u32).rev().collect()
}

/// A generated request stream plus what is needed to regenerate it.
#[derive(Clone, Debug, PartialEq)]
pub struct RequestTrace {
    pub requests: Vec<ContentId>,
    pub catalog_size: usize,
    pub exponent: f64,
    pub seed: u64,
}

impl RequestTrace {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Write the text trace format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# trace M={} s={} seed={}",
            self.catalog_size, self.exponent, self.seed
        )?;
        for (step, id) in self.requests.iter().enumerate() {
            writeln!(w, "{step} {id}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace text is ASCII")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty trace file"))?;
        let header = header?;
        let (catalog_size, exponent, seed) = parse_trace_header(&header)?;
        let mut requests = Vec::new();
        for (n, line) in lines {
            let line_no = n + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let step: u64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::parse(line_no, "expected step index"))?;
            if step != requests.len() as u64 {
                return Err(Error::parse(
                    line_no,
                    format!("step index {step}, expected {}", requests.len()),
                ));
            }
            let id: u32 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::parse(line_no, "expected content id"))?;
            if fields.next().is_some() {
                return Err(Error::parse(line_no, "trailing fields"));
            }
            if id == 0 || id as usize > catalog_size {
                return Err(Error::parse(
                    line_no,
                    format!("content id {id} outside 1..={catalog_size}"),
                ));
            }
            requests.push(ContentId(id));
        }
        Ok(RequestTrace {
            requests,
            catalog_size,
            exponent,
            seed,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }
}

fn parse_trace_header(header: &str) -> Result<(usize, f64, u64)> {
    let body = header
        .strip_prefix("# trace")
        .ok_or_else(|| Error::parse(1, "header must start with `# trace`"))?;
    let (mut m, mut s, mut seed) = (None, None, None);
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("malformed header field `{field}`")))?;
        let bad = || Error::parse(1, format!("bad value for `{key}`"));
        match key {
            "M" => m = Some(value.parse::<usize>().map_err(|_| bad())?),
            "s" => s = Some(value.parse::<f64>().map_err(|_| bad())?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad())?),
            _ => return Err(Error::parse(1, format!("unknown header field `{key}`"))),
        }
    }
    let m = m.ok_or_else(|| Error::parse(1, "header missing M"))?;
    if m == 0 || m > u32::MAX as usize {
        return Err(Error::parse(1, "M out of range"));
    }
    Ok((
        m,
        s.ok_or_else(|| Error::parse(1, "header missing s"))?,
        seed.ok_or_else(|| Error::parse(1, "header missing seed"))?,
    ))
}

/// Generate `n_steps` requests, applying each scheduled shift before the
/// request at its step is drawn.
///
/// Requests come from stream 0 of `seed` and random permutations from a
/// separate stream, so an empty schedule yields exactly the same requests as
/// repeated [`sample_request`] calls on `SimRng::new(seed)`.
pub fn generate_trace(
    model: &PopularityModel,
    schedule: &ShiftSchedule,
    n_steps: usize,
    seed: u64,
) -> Result<RequestTrace> {
    if n_steps == 0 {
        return Err(Error::invalid("trace length must be >= 1"));
    }
    schedule.validate_for(model.catalog_size())?;
    let mut rng = SimRng::new(seed);
    let mut shift_rng = SimRng::with_stream(seed, STREAM_SHIFTS);
    let mut current = model.clone();
    let mut events = schedule.events().iter().peekable();
    let mut requests = Vec::with_capacity(n_steps);
    for step in 0..n_steps as u64 {
        while let Some(event) = events.next_if(|e| e.step == step) {
            current = shift_model(&current, &event.shift, &mut shift_rng)?;
        }
        requests.push(current.sample(&mut rng));
    }
    Ok(RequestTrace {
        requests,
        catalog_size: model.catalog_size(),
        exponent: model.exponent(),
        seed,
    })
}

/// The model in force after every event scheduled strictly before `step`,
/// consuming random permutations exactly as [`generate_trace`] does.
pub fn model_at_step(
    model: &PopularityModel,
    schedule: &ShiftSchedule,
    step: u64,
    seed: u64,
) -> Result<PopularityModel> {
    let mut shift_rng = SimRng::with_stream(seed, STREAM_SHIFTS);
    let mut current = model.clone();
    for event in schedule.events().iter().take_while(|e| e.step < step) {
        current = shift_model(&current, &event.shift, &mut shift_rng)?;
    }
    Ok(current)
}

fn shift_model(model: &PopularityModel, shift: &Shift, rng: &mut SimRng) -> Result<PopularityModel> {
    match shift {
        Shift::Permutation(p) => model.apply_shift(p),
        Shift::Random => {
            let mut p: Vec<u32> = (1..=model.catalog_size() as u32).collect();
            rng.shuffle(&mut p);
            model.apply_shift(&p)
        }
    }
}
