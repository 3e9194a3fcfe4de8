//! Synthetic pipeline inputs: a treebank whose every sentence holds one
//! compound, annotation records drawn from a realistic label-pair
//! distribution, and random embeddings.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Output;

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ronc_core::embeddings::{generate_random_table, write_embeddings};
use ronc_core::taxonomy::{write_annotations, AnnotationRecord, CategoryId};

/// Annotator label pairs observed on 250 held-out compounds; row and
/// column are category ids 1..=17, symmetric, diagonal counted once.
pub const REFERENCE_PAIRS: [[u32; 17]; 17] = [
    [32, 24, 39, 0, 0, 5, 2, 15, 3, 14, 9, 1, 5, 0, 0, 0, 0],
    [24, 22, 11, 0, 1, 0, 0, 3, 0, 6, 0, 6, 0, 0, 0, 0, 2],
    [39, 11, 24, 1, 3, 0, 0, 7, 0, 0, 0, 0, 3, 0, 0, 0, 0],
    [0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0],
    [0, 1, 3, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [5, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [15, 3, 7, 0, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 0, 0],
    [3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [14, 6, 0, 0, 0, 0, 0, 0, 0, 1, 0, 3, 0, 0, 0, 0, 0],
    [9, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0],
    [1, 6, 0, 0, 0, 0, 0, 1, 0, 3, 0, 0, 0, 0, 0, 0, 0],
    [5, 0, 3, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
];

/// Unordered label pairs with their weights.
pub fn pair_weights() -> Vec<((u8, u8), u32)> {
    let mut out = Vec::new();
    for (i, row) in REFERENCE_PAIRS.iter().enumerate() {
        for (j, &w) in row.iter().enumerate().skip(i) {
            if w > 0 {
                out.push(((i as u8 + 1, j as u8 + 1), w));
            }
        }
    }
    out
}

pub struct Project {
    pub dir: PathBuf,
    pub treebank: PathBuf,
    pub annotations: PathBuf,
    pub embeddings: PathBuf,
}

pub const EMBEDDING_DIM: usize = 768;
const MODIFIER_POOL: usize = 400;
const ANNOTATORS: usize = 9;

/// Writes a project of `n` compounds under `dir`.
pub fn synthetic_project(dir: &Path, n: usize, dim: usize, seed: u64) -> Project {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conllu = String::new();
    let mut lemmas = Vec::new();
    let mut records = Vec::new();
    let weights = pair_weights();
    let total: u32 = weights.iter().map(|w| w.1).sum();
    let base = Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap();
    for i in 0..n {
        let head = format!("cap{i}");
        let modifier = format!("munte{}", rng.gen_range(0..MODIFIER_POOL));
        writeln!(conllu, "# sent_id = syn-{i}").unwrap();
        writeln!(conllu, "1\t{head}ul\t{head}\tNOUN\t_\tCase=Acc,Nom|Definite=Def\t0\troot\t_\t_").unwrap();
        if rng.gen_bool(0.4) {
            writeln!(conllu, "2\t{modifier}ului\t{modifier}\tNOUN\t_\tCase=Dat,Gen|Definite=Def\t1\tnmod\t_\t_").unwrap();
        } else {
            writeln!(conllu, "2\tde\tde\tADP\t_\t_\t3\tcase\t_\t_").unwrap();
            writeln!(conllu, "3\t{modifier}\t{modifier}\tNOUN\t_\tDefinite=Ind\t1\tnmod\t_\t_").unwrap();
        }
        conllu.push('\n');
        lemmas.push(head);
        lemmas.push(modifier);

        let mut pick = rng.gen_range(0..total);
        let &((a, b), _) = weights
            .iter()
            .find(|(_, w)| {
                if pick < *w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .unwrap();
        let (a, b) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        let who: Vec<usize> = (0..ANNOTATORS).collect::<Vec<_>>().choose_multiple(&mut rng, 2).copied().collect();
        for (k, (annotator, label)) in who.iter().zip([a, b]).enumerate() {
            records.push(AnnotationRecord {
                compound_id: format!("syn-{i}:1"),
                annotator_id: format!("ann{annotator}"),
                category_id: CategoryId::new(label).unwrap(),
                timestamp: base + chrono::TimeDelta::seconds((2 * i + k) as i64),
            });
        }
    }

    std::fs::create_dir_all(dir).unwrap();
    let project = Project {
        dir: dir.to_path_buf(),
        treebank: dir.join("treebank.conllu"),
        annotations: dir.join("annotations.tsv"),
        embeddings: dir.join("embeddings.txt"),
    };
    std::fs::write(&project.treebank, conllu).unwrap();
    write_annotations(std::fs::File::create(&project.annotations).unwrap(), &records).unwrap();
    lemmas.sort();
    lemmas.dedup();
    let table = generate_random_table(&lemmas, dim, seed);
    write_embeddings(std::io::BufWriter::new(std::fs::File::create(&project.embeddings).unwrap()), &table).unwrap();
    project
}

pub fn ronc(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_ronc"))
        .args(args)
        .env_remove("RONC_DATA_DIR")
        .output()
        .expect("running ronc")
}

/// Runs `ronc`, panicking with its stderr on failure.
pub fn ronc_ok(args: &[&str]) -> Output {
    let out = ronc(args);
    assert!(
        out.status.success(),
        "ronc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
