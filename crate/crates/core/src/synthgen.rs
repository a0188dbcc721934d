//! Synthetic corpora with known ground truth. Latent word prototypes compose
//! into class-specific shapes; views and real images are noisy part subsets
//! of the same compositions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{save_manifest, Corpus, Descriptor, Entity, EntityKind};
use crate::error::{Error, Result};
use crate::fsutil::write_json;

const MAX_PROTOTYPE_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub shapes_per_class: usize,
    pub true_words: usize,
    pub words_per_class: usize,
    /// Words shared between consecutive classes.
    pub class_word_overlap: usize,
    pub views_per_shape: usize,
    pub parts_per_view: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub prototype_separation: f64,
    /// Shapes per class emitted without a label and listed in the truth file.
    pub query_shapes_per_class: usize,
    /// Unlabelled real images, assigned to classes round-robin.
    pub image_queries: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 10,
            shapes_per_class: 20,
            true_words: 30,
            words_per_class: 4,
            class_word_overlap: 1,
            views_per_shape: 4,
            parts_per_view: 3,
            dim: 16,
            noise_sigma: 0.1,
            prototype_separation: 4.0,
            query_shapes_per_class: 3,
            image_queries: 50,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let counts = [
            ("classes", self.classes),
            ("shapes_per_class", self.shapes_per_class),
            ("true_words", self.true_words),
            ("words_per_class", self.words_per_class),
            ("views_per_shape", self.views_per_shape),
            ("parts_per_view", self.parts_per_view),
            ("dim", self.dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be at least 1"));
        }
        if self.words_per_class > self.true_words {
            return bad(format!(
                "words_per_class {} exceeds true_words {}",
                self.words_per_class, self.true_words
            ));
        }
        if self.class_word_overlap >= self.words_per_class {
            return bad("class_word_overlap must be below words_per_class".into());
        }
        if self.query_shapes_per_class >= self.shapes_per_class {
            return bad("every class needs at least one labelled shape besides its queries".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be nonnegative, got {}", self.noise_sigma));
        }
        if !(self.prototype_separation.is_finite() && self.prototype_separation > 0.0) {
            return bad(format!("prototype_separation must be positive, got {}", self.prototype_separation));
        }
        Ok(())
    }

    /// Word numbers composing class `c`: a contiguous (wrapping) block.
    pub fn class_words(&self, c: usize) -> Vec<usize> {
        let stride = self.words_per_class - self.class_word_overlap;
        let start = c * stride;
        (0..self.words_per_class).map(|k| (start + k) % self.true_words).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub corpus: Corpus,
    /// Query id to class label.
    pub truth: BTreeMap<String, String>,
    pub prototypes: Vec<Vec<f64>>,
    pub class_words: Vec<Vec<usize>>,
    /// Latent word of every generated part, by part id.
    pub part_words: BTreeMap<String, usize>,
    pub config: SynthConfig,
}

pub fn class_label(c: usize) -> String {
    format!("class_{c:02}")
}

fn round_f32(v: &mut [f64]) {
    for x in v {
        *x = *x as f32 as f64;
    }
}

fn mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r) {
            *a += b;
        }
    }
    for a in &mut m {
        *a /= rows.len() as f64;
    }
    round_f32(&mut m);
    m
}

fn draw_prototypes(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let spread = Normal::new(0.0, cfg.prototype_separation / 2.0).expect("positive spread");
    let mut protos: Vec<Vec<f64>> = Vec::with_capacity(cfg.true_words);
    let mut draws = 0;
    while protos.len() < cfg.true_words {
        if draws == MAX_PROTOTYPE_DRAWS {
            return Err(Error::Degenerate(format!(
                "could not place {} prototypes {} apart in {} dims",
                cfg.true_words, cfg.prototype_separation, cfg.dim
            )));
        }
        draws += 1;
        let mut p: Vec<f64> = (0..cfg.dim).map(|_| spread.sample(rng)).collect();
        round_f32(&mut p);
        let far = protos
            .iter()
            .all(|q| crate::linalg::sq_dist(&p, q).sqrt() >= cfg.prototype_separation);
        if far {
            protos.push(p);
        }
    }
    Ok(protos)
}

struct Builder<'a> {
    cfg: &'a SynthConfig,
    protos: &'a [Vec<f64>],
    noise: Option<Normal<f64>>,
    entities: Vec<Entity>,
    part_words: BTreeMap<String, usize>,
}

impl Builder<'_> {
    fn part(&self, word: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v = self.protos[word].clone();
        if let Some(noise) = &self.noise {
            for x in &mut v {
                *x += noise.sample(rng);
            }
            round_f32(&mut v);
        }
        v
    }

    fn push(&mut self, id: String, kind: EntityKind, label: Option<String>, parent: Option<&str>, values: Vec<f64>) -> Result<()> {
        self.entities.push(Entity {
            id,
            kind,
            label,
            parent: parent.map(str::to_string),
            descriptor: Descriptor::new(values)?,
        });
        Ok(())
    }

    /// Words for one view or image, distinct when the class has enough.
    fn pick_words(&self, words: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.cfg.parts_per_view;
        if n <= words.len() {
            sample(rng, words.len(), n).into_iter().map(|i| words[i]).collect()
        } else {
            (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect()
        }
    }

    /// Pushes `parts` under `parent` and returns their descriptors.
    fn push_parts(&mut self, parent: &str, words: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(words.len());
        for (k, &w) in words.iter().enumerate() {
            let v = self.part(w, rng);
            let id = format!("{parent}_p{k}");
            self.part_words.insert(id.clone(), w);
            self.push(id, EntityKind::Part, None, Some(parent), v.clone())?;
            out.push(v);
        }
        Ok(out)
    }

    fn shape(&mut self, id: &str, label: Option<String>, words: &[usize], rng: &mut ChaCha8Rng) -> Result<()> {
        let at = self.entities.len();
        // placeholder until the parts are drawn
        self.push(id.to_string(), EntityKind::Model, label, None, vec![0.0; self.cfg.dim])?;
        let mut all_parts = Vec::new();
        for v in 0..self.cfg.views_per_shape {
            let vid = format!("{id}_v{v}");
            let vat = self.entities.len();
            self.push(vid.clone(), EntityKind::RenderedView, None, Some(id), vec![0.0; self.cfg.dim])?;
            let picked = self.pick_words(words, rng);
            let parts = self.push_parts(&vid, &picked, rng)?;
            self.entities[vat].descriptor = Descriptor::new(mean(&parts))?;
            all_parts.extend(parts);
        }
        self.entities[at].descriptor = Descriptor::new(mean(&all_parts))?;
        Ok(())
    }

    fn image(&mut self, id: &str, words: &[usize], rng: &mut ChaCha8Rng) -> Result<()> {
        let at = self.entities.len();
        self.push(id.to_string(), EntityKind::RealImage, None, None, vec![0.0; self.cfg.dim])?;
        let picked = self.pick_words(words, rng);
        let parts = self.push_parts(id, &picked, rng)?;
        self.entities[at].descriptor = Descriptor::new(mean(&parts))?;
        Ok(())
    }
}

/// Deterministic in `config` (one RNG stream seeded from `config.seed`).
/// Within each class the last `query_shapes_per_class` shapes are the
/// unlabelled queries.
pub fn generate(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let protos = draw_prototypes(config, &mut rng)?;
    let class_words: Vec<Vec<usize>> = (0..config.classes).map(|c| config.class_words(c)).collect();
    let noise = (config.noise_sigma > 0.0).then(|| Normal::new(0.0, config.noise_sigma).expect("finite sigma"));
    let mut b = Builder {
        cfg: config,
        protos: &protos,
        noise,
        entities: Vec::new(),
        part_words: BTreeMap::new(),
    };
    let mut truth = BTreeMap::new();
    let labelled = config.shapes_per_class - config.query_shapes_per_class;
    for (c, words) in class_words.iter().enumerate() {
        for s in 0..config.shapes_per_class {
            let id = format!("shape_{:04}", c * config.shapes_per_class + s);
            let label = if s < labelled {
                Some(class_label(c))
            } else {
                truth.insert(id.clone(), class_label(c));
                None
            };
            b.shape(&id, label, words, &mut rng)?;
        }
    }
    for i in 0..config.image_queries {
        let c = i % config.classes;
        let id = format!("image_{i:04}");
        b.image(&id, &class_words[c], &mut rng)?;
        truth.insert(id, class_label(c));
    }
    let part_words = b.part_words;
    Ok(SynthWorld {
        corpus: Corpus::new(b.entities)?,
        truth,
        prototypes: protos,
        class_words,
        part_words,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldFiles {
    pub manifest: PathBuf,
    pub sidecar: PathBuf,
    pub truth: PathBuf,
}

impl WorldFiles {
    pub fn in_dir(dir: &Path) -> Self {
        WorldFiles {
            manifest: dir.join("manifest.jsonl"),
            sidecar: dir.join("descriptors.gwkg"),
            truth: dir.join("truth.json"),
        }
    }
}

/// Writes `manifest.jsonl`, `descriptors.gwkg` and `truth.json` into `dir`.
pub fn write_world(world: &SynthWorld, dir: &Path) -> Result<WorldFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = WorldFiles::in_dir(dir);
    save_manifest(&world.corpus, &files.manifest, Some(&files.sidecar))?;
    write_json(&files.truth, &world.truth)?;
    Ok(files)
}

pub fn read_truth(path: &Path) -> Result<BTreeMap<String, String>> {
    crate::fsutil::read_json(path)
}
