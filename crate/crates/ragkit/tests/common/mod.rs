#![allow(dead_code)]

pub mod fake;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ragkit::backends::ConfigBackends;
use ragkit::io::{write_json, Manifest, ManifestEntry};
use ragkit::service::Service;
use ragkit::store::Store;
use ragkit_core::config::PipelineConfig;
use ragkit_core::generation::{LmConfig, ScriptRule};
use ragkit_core::retrieval::RetrievalMode;
use tempfile::TempDir;

pub const MIXER: &str = "# Mixer manual\n\n## Cleaning\n\nRinse the mixer bowl with warm water after every batch.\n\n## Speed\n\nSet the mixer to speed 3 for bread dough and speed 5 for cream.\n";
pub const OVEN: &str = "Preheat the oven to 220 degrees before baking bread. Bake baguettes for 25 minutes.\n";
pub const STAFF: &str = "name,role,shift\nAlice,baker,morning\nBob,cashier,evening\n";
pub const PROOFER: &str = "The proofer holds dough at 32 degrees and 80 percent humidity for 45 minutes.\n";

/// A corpus directory with a manifest, a mock script and a stored config.
pub struct Fixture {
    pub dir: TempDir,
    pub manifest: PathBuf,
    pub store_root: PathBuf,
    pub config: PipelineConfig,
}

fn entry(path: &str) -> ManifestEntry {
    ManifestEntry {
        path: path.into(),
        doc_id: None,
        title: None,
        format: None,
    }
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        fs::create_dir_all(&corpus).unwrap();
        fs::write(corpus.join("mixer.md"), MIXER).unwrap();
        fs::write(corpus.join("oven.txt"), OVEN).unwrap();
        fs::write(corpus.join("staff.csv"), STAFF).unwrap();
        fs::write(corpus.join("proofer.txt"), PROOFER).unwrap();
        let manifest = corpus.join("manifest.json");
        write_manifest(&manifest, &["mixer.md", "oven.txt", "staff.csv"]);

        let script = dir.path().join("script.json");
        let rules = vec![
            rule("What speed", "speed 3", "Use speed 3 for bread dough."),
            rule("oven temperature", "220 degrees", "Preheat the oven to 220 degrees."),
            rule("proofer hold", "32 degrees", "The proofer runs at 32 degrees."),
        ];
        write_json(&script, &rules).unwrap();

        let mut config = PipelineConfig {
            name: "test".into(),
            corpus_manifest: Some(manifest.to_string_lossy().into_owned()),
            lm: LmConfig {
                mock_script: Some(script.to_string_lossy().into_owned()),
                ..LmConfig::default()
            },
            ..PipelineConfig::default()
        };
        config.retrieval.mode = RetrievalMode::Hybrid;
        let store_root = dir.path().join("store");
        let fx = Self {
            dir,
            manifest,
            store_root,
            config,
        };
        fx.store().save_config(&fx.config).unwrap();
        fx
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn store(&self) -> Store {
        Store::open(&self.store_root).unwrap()
    }

    pub fn service(&self) -> Service {
        Service::open(self.store(), Arc::new(ConfigBackends)).unwrap()
    }

    /// A service with the corpus already indexed.
    pub fn indexed(&self) -> Service {
        let s = self.service();
        s.reindex().unwrap();
        s
    }

    pub fn set_manifest(&self, files: &[&str]) {
        write_manifest(&self.manifest, files);
    }
}

pub fn rule(pattern: &str, requires: &str, answer: &str) -> ScriptRule {
    ScriptRule {
        pattern: pattern.into(),
        answer: answer.into(),
        output_tokens: None,
        requires: Some(requires.into()),
    }
}

pub fn write_manifest(path: &Path, files: &[&str]) {
    let m = Manifest {
        documents: files.iter().map(|f| entry(f)).collect(),
    };
    write_json(path, &m).unwrap();
}
