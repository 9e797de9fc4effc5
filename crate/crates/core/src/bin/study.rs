//! Experiment driver CLI: `study run <config.json>`, `study mesh-family`,
//! and `study verify <which>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tracelift::norms::calibrate_mean_weight;
use tracelift::study::{
    inv_ineq_csv, mesh_family, run, verify_inverse_inequality, FamilyKind, StudyConfig, StudyKind,
};

#[derive(Parser)]
#[command(name = "study", about = "Extension-operator experiment driver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute the studies listed in a JSON config file
    Run {
        config: PathBuf,
        /// override the config's RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// override the config's output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// largest trace-space dimension for dense eigenvalue oracles
        #[arg(long)]
        dense_limit: Option<usize>,
    },
    /// Build a mesh family and print per-level size statistics
    MeshFamily {
        /// cube | lprism
        #[arg(long, default_value = "cube")]
        domain: String,
        /// uniform | boundary_graded | vertex_graded
        #[arg(long, default_value = "uniform")]
        family: String,
        #[arg(long, default_value_t = 4)]
        levels: u32,
    },
    /// Run one named study with default settings
    Verify {
        /// lemma32 | rt_norm | nedelec_norm | exactness | corollaries
        which: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "study-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: u32,
        #[arg(long, default_value_t = 0)]
        degree: u32,
        #[arg(long, default_value_t = 600)]
        dense_limit: usize,
        #[arg(long, default_value = "uniform")]
        family: String,
    },
}

fn parse_family(s: &str) -> Result<FamilyKind, String> {
    match s {
        "uniform" => Ok(FamilyKind::Uniform),
        "boundary_graded" => Ok(FamilyKind::BoundaryGraded),
        "vertex_graded" => Ok(FamilyKind::VertexGraded),
        other => Err(format!("unknown family `{other}`")),
    }
}

fn parse_study(s: &str) -> Result<StudyKind, String> {
    match s {
        "lemma32" => Ok(StudyKind::Lemma32),
        "rt_norm" => Ok(StudyKind::RtNorm),
        "nedelec_norm" => Ok(StudyKind::NedelecNorm),
        "exactness" => Ok(StudyKind::Exactness),
        "corollaries" => Ok(StudyKind::Corollaries),
        other => Err(format!("unknown study `{other}`")),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<(), String> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config, seed, out, dense_limit } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| format!("reading {}: {e}", config.display()))?;
            let mut cfg: StudyConfig =
                serde_json::from_str(&text).map_err(|e| format!("parsing config: {e}"))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o.display().to_string();
            }
            if let Some(d) = dense_limit {
                cfg.dense_limit = d;
            }
            let report = run(&cfg).map_err(|e| e.to_string())?;
            for s in &report.passed {
                println!("pass {s}");
            }
            Ok(())
        }
        Cmd::MeshFamily { domain, family, levels } => {
            let kind = parse_family(&family)?;
            let fam = mesh_family(&domain, kind, levels).map_err(|e| e.to_string())?;
            println!("level,ncells,h_min,h_max,grading,shape_reg");
            for (i, m) in fam.iter().enumerate() {
                let (hmin, hmax) = m.h_min_max();
                println!(
                    "{},{},{:.6e},{:.6e},{:.3},{:.3}",
                    i,
                    m.n_cells(),
                    hmin,
                    hmax,
                    hmax / hmin,
                    m.shape_regularity()
                );
            }
            Ok(())
        }
        Cmd::Verify { which, seed, out, levels, degree, dense_limit, family } => {
            let study = parse_study(&which)?;
            let kind = parse_family(&family)?;
            if study == StudyKind::Lemma32 {
                // print the ratio table in addition to the run artifacts
                let fam = mesh_family("cube", kind, levels).map_err(|e| e.to_string())?;
                let w = calibrate_mean_weight(&fam[0]);
                let rows =
                    verify_inverse_inequality(&fam, degree, 40, 1, w, seed, dense_limit);
                print!("{}", inv_ineq_csv(&rows));
            }
            let cfg = StudyConfig {
                domain: "cube".into(),
                family: kind,
                levels,
                degree,
                resolution: 1,
                studies: vec![study],
                seed,
                out_dir: out.display().to_string(),
                dense_limit,
            };
            let report = run(&cfg).map_err(|e| e.to_string())?;
            for s in &report.passed {
                println!("pass {s}");
            }
            Ok(())
        }
    }
}
