#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regrepair_core::adapter::{
    write_stored_bug, FixtureManifest, Manifest, ManifestCommits, ManifestFunction,
    ScriptedCompile, ScriptedFailure, ScriptedTest, SnapshotSpec,
};
use regrepair_core::model::SnapshotRole;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn command() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_regrepair"));
    c.env_remove("REGREPAIR_STORE").env("RUST_LOG", "error");
    c
}

pub fn regrepair<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    command().args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub const SRC: &str = "src/Lib.java";
pub const WITNESS: &str = "LibTest::witness";
pub const OTHER: &str = "LibTest::other";

pub fn pass() -> ScriptedTest {
    ScriptedTest::Keyword("pass".into())
}

pub fn fail() -> ScriptedTest {
    ScriptedTest::Fail {
        fail: ScriptedFailure {
            error_type: "java.lang.AssertionError".into(),
            msg: "boom".into(),
        },
    }
}

pub fn manifest(id: &str, date: &str) -> Manifest {
    Manifest {
        bug_id: id.into(),
        project_id: "demo/lib".into(),
        commits: ManifestCommits {
            inducing: format!("{id}-bic"),
            fixing: format!("{id}-bfc"),
            fixing_date: Some(date.parse().unwrap()),
        },
        witness_tests: vec![WITNESS.into()],
        buggy_function: ManifestFunction {
            file: SRC.into(),
            signature: "int f(int x)".into(),
            start_line: 2,
            end_line: 4,
        },
        inducing_message: "Refactor f".into(),
        fixing_message: "Fix f".into(),
        adapter: None,
    }
}

pub struct Snap {
    pub compile_ok: bool,
    pub witness: ScriptedTest,
    pub other: ScriptedTest,
    pub body: &'static str,
}

impl Snap {
    pub fn new(witness: ScriptedTest, body: &'static str) -> Self {
        Snap {
            compile_ok: true,
            witness,
            other: pass(),
            body,
        }
    }

    pub fn spec(&self) -> SnapshotSpec {
        let compile = if self.compile_ok {
            ScriptedCompile::default()
        } else {
            ScriptedCompile::Fail {
                fail: "Lib.java:3: error: incompatible types".into(),
            }
        };
        SnapshotSpec {
            files: vec![(
                SRC.into(),
                format!("class Lib {{\n    int f(int x) {{\n        return {};\n    }}\n}}\n", self.body),
            )],
            fixture: Some(FixtureManifest {
                compile,
                tests: BTreeMap::from([
                    (WITNESS.into(), self.witness.clone()),
                    (OTHER.into(), self.other.clone()),
                ]),
                coverage: Some(BTreeMap::from([(SRC.to_string(), vec![2, 3, 4])])),
                overrides: vec![],
            }),
        }
    }
}

/// Snapshots of a genuine regression: pass, fail, fail, pass.
pub fn regression() -> [Snap; 4] {
    [
        Snap::new(pass(), "x + 1"),
        Snap::new(fail(), "x"),
        Snap::new(fail(), "x"),
        Snap::new(pass(), "x + 1"),
    ]
}

pub fn write_bug(root: &Path, m: &Manifest, snaps: [Snap; 4]) {
    let specs: Vec<(SnapshotRole, SnapshotSpec)> = SnapshotRole::ALL
        .into_iter()
        .zip(snaps.iter())
        .map(|(r, s)| (r, s.spec()))
        .collect();
    write_stored_bug(root, m, &specs).unwrap();
}

/// One bug per funnel outcome plus a second confirmed one:
/// 6 candidates, 1 rejected at each stage, 2 confirmed.
pub fn six_bug_store(root: &Path) {
    write_bug(root, &manifest("RegressionBug-1", "2016-11-02"), regression());

    let mut s = regression();
    s[1].compile_ok = false;
    write_bug(root, &manifest("RegressionBug-2", "2019-04-18"), s);

    let mut s = regression();
    s[1].witness = pass();
    write_bug(root, &manifest("RegressionBug-3", "2020-01-07"), s);

    let mut s = regression();
    s[2].other = fail();
    write_bug(root, &manifest("RegressionBug-4", "2021-06-30"), s);

    write_bug(root, &manifest("RegressionBug-5", "2017-06-01"), regression());
    write_bug(root, &manifest("RegressionBug-6", "2023-02-14"), regression());
}

/// Per-bug (patch size, chunk count) pairs of the synthetic developer-patch
/// corpus, sorted by size. Quantiles follow the reference descriptive
/// statistics; sizes total 1796 lines.
pub fn developer_patch_corpus() -> Vec<(u32, u32)> {
    let mut sizes = vec![1u32; 35];
    sizes.extend([2; 8]);
    sizes.extend([3; 6]);
    sizes.extend([4, 4, 5, 5, 5, 6, 6, 6, 7, 7, 7, 8, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12]);
    sizes.extend([13, 13, 13, 13, 15, 16, 18, 19, 20, 22, 24, 26, 28, 29, 30, 31, 32, 32, 33]);
    sizes.extend([40, 52, 64, 80, 92, 130, 180, 236, 256]);
    let mut chunks = vec![1u32; 51];
    chunks.extend([2; 12]);
    chunks.extend([3; 13]);
    chunks.extend([4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9, 10, 10, 12, 15, 20, 25, 31]);
    chunks.extend([40, 60, 80, 93]);
    assert_eq!((sizes.len(), chunks.len()), (99, 99));
    sizes.into_iter().zip(chunks).collect()
}

/// Old and new text of a file whose diff has `chunks` separate hunks with
/// `size` changed lines in total. Hunks cycle through replaced, inserted and
/// deleted blocks.
pub fn patch_pair(size: u32, chunks: u32) -> (String, String) {
    assert!(chunks >= 1 && size >= chunks);
    let base = size / chunks;
    let extra = size % chunks;
    let (mut old, mut new) = (Vec::new(), Vec::new());
    let mut k = 0;
    let mut keep = |old: &mut Vec<String>, new: &mut Vec<String>| {
        for _ in 0..2 {
            k += 1;
            old.push(format!("    keep({k});"));
            new.push(format!("    keep({k});"));
        }
    };
    keep(&mut old, &mut new);
    for c in 0..chunks {
        let len = base + u32::from(c < extra);
        for i in 0..len {
            match c % 3 {
                0 => {
                    old.push(format!("    before({c}, {i});"));
                    new.push(format!("    after({c}, {i});"));
                }
                1 => new.push(format!("    inserted({c}, {i});")),
                _ => old.push(format!("    deleted({c}, {i});")),
            }
        }
        keep(&mut old, &mut new);
    }
    (old.join("\n") + "\n", new.join("\n") + "\n")
}
