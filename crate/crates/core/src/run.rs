//! Deterministic parallel event generation and the per-class analysis chain.
//!
//! Attempts are cut into fixed-size chunks. Chunk i draws from a ChaCha8
//! generator seeded with the run seed on stream i, so results do not depend on
//! how chunks are spread over worker threads.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    correlation_set, fit_cosine, AngleHistogram, CorrelationSet, FitResult, Selection,
};
use crate::apparatus::{ChannelModels, ClassTag, EventGenerator, EventRecord};
use crate::config::RunConfig;
use crate::pair::PairModel;
use crate::Error;

/// Attempted events per random stream.
pub const CHUNK_SIZE: u64 = 65_536;

/// Echo of the physics-relevant configuration. Worker count and output
/// paths are left out so that summaries compare equal across them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Fields pinned by the preset.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub preset_fixed: BTreeMap<String, String>,
    pub model: PairModel,
    pub decoherent_model: PairModel,
    pub backscatter_model: PairModel,
    pub apparatus: crate::apparatus::ApparatusConfig,
    pub n_events: u64,
    pub seed: u64,
}

impl ConfigEcho {
    pub fn new(c: &RunConfig) -> Self {
        Self {
            preset: c.preset.map(|p| p.name().to_string()),
            preset_fixed: c
                .preset
                .map(|p| {
                    p.fixed_fields()
                        .into_iter()
                        .map(|(k, v)| (k.to_string(), v))
                        .collect()
                })
                .unwrap_or_default(),
            model: c.model,
            decoherent_model: c.decoherent_model,
            backscatter_model: c.backscatter_model,
            apparatus: c.apparatus.clone(),
            n_events: c.n_events,
            seed: c.seed,
        }
    }
}

/// How random streams were derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub generator: String,
    pub seed: u64,
    pub chunk_size: u64,
    pub n_chunks: u64,
    pub rule: String,
}

/// Fit summary in the flat key layout used by external tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub class: String,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "sigma_R")]
    pub sigma_r: f64,
    pub mu: f64,
    pub sigma_mu: f64,
    pub p0: Option<f64>,
    pub sigma_p0: Option<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub cov: [[f64; 2]; 2],
}

impl FitSummary {
    pub fn new(
        model: String,
        selection: Selection,
        fit: &FitResult,
        correlations: &CorrelationSet,
    ) -> Self {
        Self {
            model,
            class: selection.to_string(),
            a: fit.a,
            b: fit.b,
            r: fit.r,
            sigma_r: fit.sigma_r,
            mu: fit.mu,
            sigma_mu: fit.sigma_mu,
            p0: correlations.s_fit.map(|s| s.p0),
            sigma_p0: correlations.s_fit.map(|s| s.sigma_p0),
            chi2: fit.chi2,
            dof: fit.dof,
            cov: fit.cov,
        }
    }

    pub fn fit_result(&self) -> FitResult {
        FitResult {
            a: self.a,
            b: self.b,
            cov: self.cov,
            chi2: self.chi2,
            dof: self.dof,
            r: self.r,
            sigma_r: self.sigma_r,
            mu: self.mu,
            sigma_mu: self.sigma_mu,
        }
    }
}

/// Analysis of one event selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub selection: Selection,
    pub accepted: u64,
    pub histogram: AngleHistogram,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
    pub correlations: CorrelationSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ConfigEcho,
    pub attempted: u64,
    pub accepted: u64,
    /// Events per class tag, rejected included.
    pub class_counts: BTreeMap<String, u64>,
    pub primary_selection: Selection,
    pub classes: Vec<ClassSummary>,
    pub streams: StreamRecord,
    /// Not serialized, so that summaries stay byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn class(&self, selection: Selection) -> Option<&ClassSummary> {
        self.classes.iter().find(|c| c.selection == selection)
    }

    pub fn primary(&self) -> Option<&ClassSummary> {
        self.class(self.primary_selection)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary always serializes")
    }
}

/// Per-tag histograms of one batch of events.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHistograms {
    pub by_tag: BTreeMap<ClassTag, AngleHistogram>,
    pub rejected: u64,
}

impl ClassHistograms {
    pub fn new(n_bins: usize) -> Self {
        let by_tag = ClassTag::ALL
            .into_iter()
            .filter(|t| *t != ClassTag::Rejected)
            .map(|t| (t, AngleHistogram::new(n_bins)))
            .collect();
        Self {
            by_tag,
            rejected: 0,
        }
    }

    pub fn add(&mut self, tag: ClassTag, counter1: usize, counter2: usize) {
        match self.by_tag.get_mut(&tag) {
            Some(h) => h.fill(counter1, counter2),
            None => self.rejected += 1,
        }
    }

    pub fn merge(&mut self, other: &ClassHistograms) {
        for (tag, h) in &other.by_tag {
            self.by_tag.get_mut(tag).expect("same tag set").merge(h);
        }
        self.rejected += other.rejected;
    }

    pub fn accepted(&self) -> u64 {
        self.by_tag.values().map(|h| h.total()).sum()
    }

    pub fn select(&self, selection: Selection) -> AngleHistogram {
        let n = self.by_tag.values().next().map_or(16, |h| h.n_bins());
        let mut out = AngleHistogram::new(n);
        for (tag, h) in &self.by_tag {
            if selection.contains(*tag) {
                out.merge(h);
            }
        }
        out
    }

    pub fn class_counts(&self) -> BTreeMap<String, u64> {
        let mut m: BTreeMap<String, u64> = self
            .by_tag
            .iter()
            .map(|(t, h)| (t.to_string(), h.total()))
            .collect();
        m.insert(ClassTag::Rejected.to_string(), self.rejected);
        m
    }
}

/// Pair model responsible for a selection, as a label.
pub fn selection_model(selection: Selection, models: &ChannelModels) -> String {
    match selection {
        Selection::EntangledCandidate => models.main.to_string(),
        Selection::A | Selection::B | Selection::C | Selection::Decoherent => {
            models.decoherent.to_string()
        }
        Selection::D => models.backscatter.to_string(),
        Selection::AllAccepted => format!(
            "{}+{}+{}",
            models.main, models.decoherent, models.backscatter
        ),
    }
}

/// Fits and correlations for every selection. A failing fit is reported on
/// its class and does not stop the others.
pub fn analyze_classes(
    hists: &ClassHistograms,
    model_label: impl Fn(Selection) -> String,
) -> Vec<ClassSummary> {
    Selection::ALL
        .into_iter()
        .map(|selection| {
            let histogram = hists.select(selection);
            let correlations = correlation_set(&histogram);
            let (fit, fit_error) = match fit_cosine(&histogram) {
                Ok(f) => (
                    Some(FitSummary::new(
                        model_label(selection),
                        selection,
                        &f,
                        &correlations,
                    )),
                    None,
                ),
                Err(e) => {
                    log::debug!("class {selection}: {e}");
                    (None, Some(e.to_string()))
                }
            };
            ClassSummary {
                selection,
                accepted: histogram.total(),
                histogram,
                fit,
                fit_error,
                correlations,
            }
        })
        .collect()
}

pub fn channel_models(config: &RunConfig) -> ChannelModels {
    ChannelModels {
        main: config.model,
        decoherent: config.decoherent_model,
        backscatter: config.backscatter_model,
    }
}

struct ChunkResult {
    hists: ClassHistograms,
    events: Vec<EventRecord>,
}

fn run_chunk(
    generator: &EventGenerator,
    seed: u64,
    index: u64,
    len: u64,
    keep_events: bool,
) -> ChunkResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n_bins = generator.config().n_counters_per_arm;
    let mut hists = ClassHistograms::new(n_bins);
    let mut events = Vec::new();
    for _ in 0..len {
        let e = generator.generate(&mut rng);
        hists.add(e.class_tag, e.counter1, e.counter2);
        if keep_events && e.class_tag != ClassTag::Rejected {
            events.push(e);
        }
    }
    ChunkResult { hists, events }
}

/// Histograms, summary and, when requested, the accepted events in chunk order.
pub struct RunOutput {
    pub summary: RunSummary,
    pub histograms: ClassHistograms,
    pub events: Option<Vec<EventRecord>>,
}

/// Runs the configured simulation. Keeps accepted events only if
/// `keep_events` is set.
pub fn run(config: &RunConfig, keep_events: bool) -> Result<RunOutput, Error> {
    config
        .validate()
        .map_err(crate::config::ConfigError::from)?;
    let start = Instant::now();
    let models = channel_models(config);
    let generator = EventGenerator::new(models, &config.apparatus)?;
    let n_chunks = config.n_events.div_ceil(CHUNK_SIZE);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Runtime(e.to_string()))?;
    let chunks: Vec<ChunkResult> = pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|i| {
                let len = CHUNK_SIZE.min(config.n_events - i * CHUNK_SIZE);
                run_chunk(&generator, config.seed, i, len, keep_events)
            })
            .collect()
    });
    let mut histograms = ClassHistograms::new(config.apparatus.n_counters_per_arm);
    let mut events = keep_events.then(Vec::new);
    for chunk in chunks {
        histograms.merge(&chunk.hists);
        if let Some(all) = events.as_mut() {
            all.extend(chunk.events);
        }
    }
    let classes = analyze_classes(&histograms, |s| selection_model(s, &models));
    let summary = RunSummary {
        config: ConfigEcho::new(config),
        attempted: config.n_events,
        accepted: histograms.accepted(),
        class_counts: histograms.class_counts(),
        primary_selection: config.selection(),
        classes,
        streams: StreamRecord {
            generator: "ChaCha8".to_string(),
            seed: config.seed,
            chunk_size: CHUNK_SIZE,
            n_chunks,
            rule: "chunk i covers attempts [i*chunk_size, (i+1)*chunk_size) and uses stream id i of the seeded generator"
                .to_string(),
        },
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        summary,
        histograms,
        events,
    })
}
