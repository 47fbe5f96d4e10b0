//! Planted synthetic dataset generator.
//!
//! Learners and KCs are partitioned into blocks, each block into subthemes,
//! with one course per (block, subtheme) pair. A learner enrolls in their
//! preferred subtheme's course plus one secondary course in the same block
//! and interacts mostly with the preferred course's KCs. KC names embed the
//! block and subtheme tokens, so hashed-trigram content features carry the
//! planted structure; the held-out test positives come from the preferred
//! pool, giving directional learning tests a known answer.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthSpec {
    pub learners: u32,
    pub kcs: u32,
    pub blocks: u32,
    /// Planted aspect count: subthemes per block.
    pub subthemes: u32,
    pub videos_per_course: u32,
    pub train_per_learner: u32,
    pub test_per_learner: u32,
    /// Fraction of train interactions drawn uniformly from all KCs.
    pub cross_noise: f64,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            learners: 400,
            kcs: 400,
            blocks: 4,
            subthemes: 4,
            videos_per_course: 3,
            train_per_learner: 12,
            test_per_learner: 2,
            cross_noise: 0.1,
            embedding_dim: 10,
            seed: 7,
        }
    }
}

const BLOCK_TOKENS: &[&str] = &[
    "algebra", "biology", "circuits", "dynamics", "ecology", "fourier", "geometry", "harmonics",
];
const SUB_TOKENS: &[&str] = &[
    "basics", "proofs", "applied", "labs", "history", "models", "systems", "theory",
];

/// Write descriptor, relation files, KC names, and interactions under `dir`.
/// Returns the descriptor path.
pub fn write_dataset(spec: &SynthSpec, dir: &Path) -> Result<PathBuf> {
    assert!(spec.blocks as usize <= BLOCK_TOKENS.len(), "too many blocks");
    assert!(spec.subthemes as usize <= SUB_TOKENS.len(), "too many subthemes");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_courses = spec.blocks * spec.subthemes;
    let n_videos = n_courses * spec.videos_per_course;
    let n_teachers = spec.blocks;

    // KC pools per course, contiguous chunks
    let per_course = (spec.kcs / n_courses).max(1);
    let course_pool = |c: u32| -> Vec<u32> {
        let start = c * per_course;
        let end = if c + 1 == n_courses {
            spec.kcs
        } else {
            ((c + 1) * per_course).min(spec.kcs)
        };
        (start..end).collect()
    };
    let course_of = |block: u32, sub: u32| block * spec.subthemes + sub;

    let mut kc_names = vec![String::new(); spec.kcs as usize];
    for c in 0..n_courses {
        let block = c / spec.subthemes;
        let sub = c % spec.subthemes;
        for (i, &k) in course_pool(c).iter().enumerate() {
            // subtheme token twice so hashed trigrams weight it over the
            // per-KC index noise
            kc_names[k as usize] = format!(
                "{} {} {} {i:02}",
                BLOCK_TOKENS[block as usize],
                SUB_TOKENS[sub as usize],
                SUB_TOKENS[sub as usize]
            );
        }
    }

    let mut lc = Vec::new(); // learner-course
    let mut interactions = Vec::new();
    let day = 86_400i64;
    let base_ts = 1_546_300_800i64; // 2019-01-01
    let cutoff_ts = base_ts + 300 * day;

    for l in 0..spec.learners {
        let block = l % spec.blocks;
        let preferred = rng.random_range(0..spec.subthemes);
        let secondary = (preferred + 1 + rng.random_range(0..spec.subthemes.max(2) - 1))
            % spec.subthemes;
        let c_pref = course_of(block, preferred);
        let c_sec = course_of(block, secondary);
        lc.push((l, c_pref));
        if c_sec != c_pref {
            lc.push((l, c_sec));
        }

        let pref_pool = course_pool(c_pref);
        let sec_pool = course_pool(c_sec);
        let n_total = (spec.train_per_learner + spec.test_per_learner) as usize;
        let mut chosen: Vec<u32> = Vec::with_capacity(n_total);

        // train draws: mostly preferred, some secondary, a little noise
        while chosen.len() < spec.train_per_learner as usize {
            let roll: f64 = rng.random_range(0.0..1.0);
            let k = if roll < spec.cross_noise {
                rng.random_range(0..spec.kcs)
            } else if roll < spec.cross_noise + 0.2 && !sec_pool.is_empty() {
                sec_pool[rng.random_range(0..sec_pool.len())]
            } else {
                pref_pool[rng.random_range(0..pref_pool.len())]
            };
            if !chosen.contains(&k) {
                chosen.push(k);
            }
        }
        // test draws: strictly from the preferred pool
        let mut remaining: Vec<u32> = pref_pool
            .iter()
            .copied()
            .filter(|k| !chosen.contains(k))
            .collect();
        remaining.shuffle(&mut rng);
        for k in remaining.into_iter().take(spec.test_per_learner as usize) {
            chosen.push(k);
        }

        for (i, &k) in chosen.iter().enumerate() {
            let is_test = i >= spec.train_per_learner as usize;
            let ts = if is_test {
                cutoff_ts + (i as i64) * day + (l as i64 % 24) * 3600
            } else {
                base_ts + (i as i64) * day + (l as i64 % 24) * 3600
            };
            interactions.push((l, k, ts));
        }
    }

    // course-video and video-KC: each video covers a chunk of its course pool
    let mut cv = Vec::new();
    let mut vk = Vec::new();
    for c in 0..n_courses {
        let pool = course_pool(c);
        let vids: Vec<u32> = (0..spec.videos_per_course)
            .map(|i| c * spec.videos_per_course + i)
            .collect();
        for (vi, &v) in vids.iter().enumerate() {
            cv.push((c, v));
            for (ki, &k) in pool.iter().enumerate() {
                if ki % vids.len() == vi {
                    vk.push((v, k));
                }
            }
        }
    }
    let ck: Vec<(u32, u32)> = (0..n_courses)
        .flat_map(|c| course_pool(c).into_iter().map(move |k| (c, k)))
        .collect();
    let tc: Vec<(u32, u32)> = (0..n_courses).map(|c| (c / spec.subthemes, c)).collect();

    fs::create_dir_all(dir)?;
    let write_pairs = |name: &str, rows: &[(u32, u32)]| -> Result<()> {
        let body: String = rows
            .iter()
            .map(|(a, b)| format!("{a}\t{b}\n"))
            .collect();
        fs::write(dir.join(name), body)?;
        Ok(())
    };
    write_pairs("learner_course.tsv", &lc)?;
    write_pairs("course_video.tsv", &cv)?;
    write_pairs("video_kc.tsv", &vk)?;
    write_pairs("course_kc.tsv", &ck)?;
    write_pairs("teacher_course.tsv", &tc)?;

    let names_body: String = kc_names
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{i}\t{n}\n"))
        .collect();
    fs::write(dir.join("kc_names.tsv"), names_body)?;

    let mut inter_body = String::new();
    for (l, k, ts) in &interactions {
        let dt = chrono::DateTime::from_timestamp(*ts, 0).unwrap();
        inter_body.push_str(&format!("{l}\t{k}\t{}\n", dt.to_rfc3339()));
    }
    fs::write(dir.join("interactions.tsv"), inter_body)?;

    let cutoff_dt = chrono::DateTime::from_timestamp(cutoff_ts, 0).unwrap();
    let descriptor = format!(
        "# planted synthetic dataset (blocks={}, subthemes={}, seed={})\n\
         entity learner {}\n\
         entity video {}\n\
         entity course {}\n\
         entity teacher {}\n\
         entity KC {}\n\
         relation learner course learner_course.tsv\n\
         relation course video course_video.tsv\n\
         relation video KC video_kc.tsv\n\
         relation course KC course_kc.tsv\n\
         relation teacher course teacher_course.tsv\n\
         kc_names kc_names.tsv\n\
         interactions interactions.tsv\n\
         cutoff {}\n\
         embedding_provider trigram\n\
         embedding_dim {}\n",
        spec.blocks,
        spec.subthemes,
        spec.seed,
        spec.learners,
        n_videos,
        n_courses,
        n_teachers,
        spec.kcs,
        cutoff_dt.to_rfc3339(),
        spec.embedding_dim
    );
    let desc_path = dir.join("dataset.desc");
    fs::write(&desc_path, descriptor)?;
    Ok(desc_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_dataset;

    #[test]
    fn generated_dataset_loads_and_splits() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            learners: 24,
            kcs: 48,
            blocks: 2,
            subthemes: 2,
            train_per_learner: 5,
            test_per_learner: 1,
            ..SynthSpec::default()
        };
        let desc = write_dataset(&spec, dir.path()).unwrap();
        let ds = load_dataset(&desc).unwrap();
        let lt = ds.graph.type_index("learner").unwrap();
        let kt = ds.graph.type_index("KC").unwrap();
        assert_eq!(ds.graph.node_count(lt), 24);
        assert_eq!(ds.graph.node_count(kt), 48);
        assert_eq!(ds.interactions.train().count(), 24 * 5);
        assert_eq!(ds.interactions.test().count(), 24);
        // block tokens present in names
        assert!(ds.kc_names.iter().all(|n| !n.is_empty()));
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            learners: 10,
            kcs: 16,
            blocks: 2,
            subthemes: 2,
            ..SynthSpec::default()
        };
        write_dataset(&spec, d1.path()).unwrap();
        write_dataset(&spec, d2.path()).unwrap();
        for f in ["learner_course.tsv", "interactions.tsv", "kc_names.tsv"] {
            let a = std::fs::read_to_string(d1.path().join(f)).unwrap();
            let b = std::fs::read_to_string(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} differs across identical seeds");
        }
    }
}
