//! Content library naming and packetization.
//!
//! Videos are split into segments, each segment is offered in several
//! representations, and each (video, segment, representation) object is split
//! into generations of packets. A generation is addressed by a [`NamePrefix`].

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Content object name plus generation id.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NamePrefix {
    pub object_name: Arc<str>,
    pub generation_id: u32,
}

impl NamePrefix {
    pub fn new(object_name: impl Into<Arc<str>>, generation_id: u32) -> Self {
        NamePrefix {
            object_name: object_name.into(),
            generation_id,
        }
    }
}

impl fmt::Display for NamePrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/{}/g{}", self.object_name, self.generation_id)
    }
}

impl fmt::Debug for NamePrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationConfig {
    pub name: String,
    pub bitrate_kbps: u32,
    pub packets: u32,
    pub generations: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryConfig {
    pub videos: u32,
    pub segments: u32,
    #[serde(default = "default_segment_duration")]
    pub segment_duration_s: f64,
    /// Nominal Data payload size, used for link timing and goodput.
    #[serde(default = "default_payload_bytes")]
    pub payload_bytes: usize,
    /// Bytes materialized per packet and pushed through coding and decoding.
    /// Defaults to `payload_bytes`.
    #[serde(default)]
    pub carried_payload_bytes: Option<usize>,
    pub representations: Vec<RepresentationConfig>,
}

fn default_segment_duration() -> f64 {
    2.0
}

fn default_payload_bytes() -> usize {
    1250
}

impl LibraryConfig {
    /// 480p/720p/1080p ladder with the packet and generation counts of the
    /// reference evaluation.
    pub fn reference_representations() -> Vec<RepresentationConfig> {
        vec![
            RepresentationConfig {
                name: "480p".into(),
                bitrate_kbps: 1750,
                packets: 359,
                generations: 4,
            },
            RepresentationConfig {
                name: "720p".into(),
                bitrate_kbps: 3000,
                packets: 615,
                generations: 7,
            },
            RepresentationConfig {
                name: "1080p".into(),
                bitrate_kbps: 5800,
                packets: 1188,
                generations: 12,
            },
        ]
    }

    /// Five 50-segment videos, full 1250-byte payloads.
    pub fn full_scale() -> Self {
        LibraryConfig {
            videos: 5,
            segments: 50,
            segment_duration_s: 2.0,
            payload_bytes: 1250,
            carried_payload_bytes: None,
            representations: Self::reference_representations(),
        }
    }

    /// Two 10-segment videos; carries 32 payload bytes per packet.
    pub fn desk_scale() -> Self {
        LibraryConfig {
            videos: 2,
            segments: 10,
            segment_duration_s: 2.0,
            payload_bytes: 1250,
            carried_payload_bytes: Some(32),
            representations: Self::reference_representations(),
        }
    }

    pub fn carried_bytes(&self) -> usize {
        self.carried_payload_bytes.unwrap_or(self.payload_bytes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationSpec {
    pub prefix: NamePrefix,
    pub size: usize,
    pub payload_bytes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    pub index: usize,
    pub name: String,
    pub bitrate_bps: f64,
    pub packets: usize,
    pub generation_sizes: Vec<usize>,
}

impl Representation {
    pub fn generations(&self) -> usize {
        self.generation_sizes.len()
    }
}

/// Ceil-split of `packets` into `generations` groups; the final group takes
/// the remainder.
pub fn split_generations(packets: u32, generations: u32) -> Result<Vec<usize>> {
    if packets == 0 || generations == 0 {
        return Err(Error::config(format!(
            "representation needs at least one packet and one generation (got {packets}/{generations})"
        )));
    }
    let per = packets.div_ceil(generations) as usize;
    let head = per * (generations as usize - 1);
    if head >= packets as usize {
        return Err(Error::config(format!(
            "{packets} packets cannot be ceil-split into {generations} non-empty generations"
        )));
    }
    let mut sizes = vec![per; generations as usize - 1];
    sizes.push(packets as usize - head);
    Ok(sizes)
}

#[derive(Debug)]
pub struct ContentLibrary {
    config: LibraryConfig,
    representations: Vec<Representation>,
    /// `names[video][segment][rep]`
    names: Vec<Vec<Vec<Arc<str>>>>,
    generations: HashMap<NamePrefix, GenerationSpec>,
}

pub fn build_library(cfg: &LibraryConfig) -> Result<ContentLibrary> {
    ContentLibrary::new(cfg.clone())
}

impl ContentLibrary {
    pub fn new(config: LibraryConfig) -> Result<Self> {
        if config.videos == 0 || config.segments == 0 {
            return Err(Error::config("library needs at least one video and one segment"));
        }
        if config.representations.is_empty() {
            return Err(Error::config("library needs at least one representation"));
        }
        if config.payload_bytes == 0 || config.carried_bytes() == 0 {
            return Err(Error::config("payload sizes must be positive"));
        }
        let mut representations = Vec::with_capacity(config.representations.len());
        for (index, r) in config.representations.iter().enumerate() {
            representations.push(Representation {
                index,
                name: r.name.clone(),
                bitrate_bps: r.bitrate_kbps as f64 * 1000.0,
                packets: r.packets as usize,
                generation_sizes: split_generations(r.packets, r.generations)?,
            });
        }
        // Adaptation walks the ladder by index; keep it sorted by bitrate.
        if representations
            .windows(2)
            .any(|w| w[0].bitrate_bps >= w[1].bitrate_bps)
        {
            return Err(Error::config(
                "representations must be listed in strictly increasing bitrate order",
            ));
        }

        let carried = config.carried_bytes();
        let mut names = Vec::with_capacity(config.videos as usize);
        let mut generations = HashMap::new();
        for v in 0..config.videos {
            let mut segs = Vec::with_capacity(config.segments as usize);
            for s in 0..config.segments {
                let mut reps = Vec::with_capacity(representations.len());
                for rep in &representations {
                    let name: Arc<str> = format!("video{v}/seg{s}/{}", rep.name).into();
                    for (g, &size) in rep.generation_sizes.iter().enumerate() {
                        let prefix = NamePrefix::new(name.clone(), g as u32);
                        generations.insert(
                            prefix.clone(),
                            GenerationSpec {
                                prefix,
                                size,
                                payload_bytes: carried,
                            },
                        );
                    }
                    reps.push(name);
                }
                segs.push(reps);
            }
            names.push(segs);
        }
        Ok(ContentLibrary {
            config,
            representations,
            names,
            generations,
        })
    }

    pub fn config(&self) -> &LibraryConfig {
        &self.config
    }

    pub fn videos(&self) -> usize {
        self.config.videos as usize
    }

    pub fn segments(&self) -> usize {
        self.config.segments as usize
    }

    pub fn segment_duration_s(&self) -> f64 {
        self.config.segment_duration_s
    }

    pub fn representations(&self) -> &[Representation] {
        &self.representations
    }

    pub fn carried_bytes(&self) -> usize {
        self.config.carried_bytes()
    }

    pub fn payload_bytes(&self) -> usize {
        self.config.payload_bytes
    }

    pub fn total_packets(&self) -> u64 {
        let per_segment: u64 = self.representations.iter().map(|r| r.packets as u64).sum();
        self.config.videos as u64 * self.config.segments as u64 * per_segment
    }

    pub fn generation_count(&self) -> usize {
        self.generations.len()
    }

    pub fn object_name(&self, video: usize, segment: usize, rep: usize) -> &Arc<str> {
        &self.names[video][segment][rep]
    }

    pub fn prefix(&self, video: usize, segment: usize, rep: usize, generation: usize) -> NamePrefix {
        NamePrefix::new(self.names[video][segment][rep].clone(), generation as u32)
    }

    pub fn generation_of(&self, prefix: &NamePrefix) -> Result<&GenerationSpec> {
        self.generations
            .get(prefix)
            .ok_or_else(|| Error::UnknownPrefix(prefix.to_string()))
    }

    pub fn contains(&self, prefix: &NamePrefix) -> bool {
        self.generations.contains_key(prefix)
    }

    /// Iterates every generation in the library in name order.
    pub fn iter_generations(&self) -> impl Iterator<Item = &GenerationSpec> {
        let mut all: Vec<_> = self.generations.values().collect();
        all.sort_by(|a, b| a.prefix.cmp(&b.prefix));
        all.into_iter()
    }

    /// Deterministic source bytes of source packet `index` of a generation.
    pub fn source_payload(&self, prefix: &NamePrefix, index: usize) -> Vec<u8> {
        source_payload(prefix, index, self.carried_bytes())
    }

    /// All source payloads of a generation, in index order.
    pub fn source_payloads(&self, prefix: &NamePrefix) -> Result<Vec<Vec<u8>>> {
        let spec = self.generation_of(prefix)?;
        Ok((0..spec.size)
            .map(|j| source_payload(prefix, j, spec.payload_bytes))
            .collect())
    }
}

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Pseudorandom bytes seeded by (object name, generation, packet index).
pub fn source_payload(prefix: &NamePrefix, index: usize, len: usize) -> Vec<u8> {
    let mut h = fnv1a(prefix.object_name.as_bytes(), 0xcbf2_9ce4_8422_2325);
    h = fnv1a(&prefix.generation_id.to_le_bytes(), h);
    h = fnv1a(&(index as u64).to_le_bytes(), h);
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}
