//! Subcommand implementations. Each stage reads and writes the MOT text
//! formats so stages compose through files. All diagnostics go to stderr;
//! result files carry rows only.

use std::fs;
use std::path::Path;

use mcmot::appearance::{EmbeddingProvider, EmbeddingTable, NoEmbeddings};
use mcmot::camera::TransformTable;
use mcmot::evalsim::simulate;
use mcmot::globallink::global_link;
use mcmot::io;
use mcmot::model::Trajectory;
use mcmot::online::{rough2fine, track_sequence};
use mcmot::postprocess::{denoise, interpolate, rescore, tracknms};
use mcmot::{Error, Result};

use crate::config::{PostStage, RunConfig};
use crate::{EvalArgs, FuseArgs, LinkArgs, PostArgs, SimArgs, TrackArgs};

fn load_config(common: &crate::Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref(), &common.set)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn read_file(path: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::input(format!("cannot read {path}: {e}")))
}

fn write_file(path: &str, text: &str) -> Result<()> {
    if let Some(parent) = Path::new(path).parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::input(format!("cannot write {path}: {e}")))
}

fn load_embeddings(path: Option<&str>) -> Result<Box<dyn EmbeddingProvider>> {
    match path {
        Some(p) => {
            let table: EmbeddingTable = io::read_embeddings(&read_file(p)?, p)?;
            Ok(Box::new(table))
        }
        None => {
            log::warn!("no embedding sidecar given; appearance matching is disabled");
            Ok(Box::new(NoEmbeddings))
        }
    }
}

pub fn run_track(args: &TrackArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let detections = io::read_detections(&read_file(&args.det)?, &args.det)?;
    let embeddings = load_embeddings(args.embeddings.as_deref())?;
    let transforms = match &args.transforms {
        Some(p) => io::read_transforms(&read_file(p)?, p)?,
        None => TransformTable::new(),
    };

    let tracklets = track_sequence(&detections, embeddings.as_ref(), &transforms, &cfg.online)?;

    let (start, end) = tracklets.iter().fold((i64::MAX, i64::MIN), |acc, t| {
        (acc.0.min(t.start_frame()), acc.1.max(t.end_frame()))
    });
    if tracklets.is_empty() {
        eprintln!("track: 0 tracklets");
    } else {
        eprintln!(
            "track: {} tracklets over frames {start}..{end}",
            tracklets.len()
        );
    }

    if args.vote {
        let trajs: Vec<Trajectory> = tracklets
            .iter()
            .map(|t| Trajectory::from_entries(t.id, t.entries.clone()))
            .collect();
        let voted = rough2fine(trajs, cfg.online.vote_mode, cfg.online.vote_floor)?;
        write_file(&args.out, &io::write_trajectories(&voted))?;
        if args.out_embeddings.is_some() {
            return Err(Error::input(
                "--out-embeddings is not available with --vote (voted output is final)",
            ));
        }
    } else {
        let (mot, sidecar) = io::write_tracklets_with_embeddings(&tracklets, embeddings.as_ref());
        write_file(&args.out, &mot)?;
        if let Some(out_emb) = &args.out_embeddings {
            match sidecar {
                Some(text) => write_file(out_emb, &text)?,
                None => log::warn!("no embeddings matched; {out_emb} not written"),
            }
        }
    }
    Ok(())
}

pub fn run_link(args: &LinkArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let tracklets = io::read_tracklets(
        &read_file(&args.tracklets)?,
        &args.tracklets,
        &cfg.online.class_map,
    )?;
    let embeddings = load_embeddings(args.embeddings.as_deref())?;

    let mut trajectories = global_link(&tracklets, embeddings.as_ref(), &cfg.link)?;
    eprintln!(
        "link: {} tracklets -> {} trajectories",
        tracklets.len(),
        trajectories.len()
    );

    if args.vote {
        trajectories = rough2fine(trajectories, cfg.online.vote_mode, cfg.online.vote_floor)?;
    } else {
        // intermediate output keeps raw per-entry classes and scores
        for t in &mut trajectories {
            t.class_votes.clear();
        }
    }
    write_file(&args.out, &io::write_trajectories(&trajectories))
}

pub fn run_post(args: &PostArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    cfg.post.validate()?;
    let mut trajectories = io::read_trajectories(&read_file(&args.input)?, &args.input)?;
    let before = trajectories.len();

    for stage in &cfg.post_stages.order {
        match stage {
            PostStage::Denoise if cfg.post_stages.denoise => {
                trajectories = denoise(trajectories, &cfg.post);
            }
            PostStage::Interpolate if cfg.post_stages.interpolate => {
                trajectories = trajectories
                    .into_iter()
                    .map(|t| interpolate(t, cfg.post.max_gap))
                    .collect();
            }
            PostStage::Rescore if cfg.post_stages.rescore => {
                rescore(&mut trajectories, cfg.post.tau);
            }
            _ => {}
        }
    }
    eprintln!("post: {before} -> {} trajectories", trajectories.len());
    write_file(&args.out, &io::write_trajectories(&trajectories))
}

pub fn run_fuse(args: &FuseArgs) -> Result<()> {
    if args.inputs.len() < 2 {
        return Err(Error::input(format!(
            "fuse needs at least 2 input files, got {}",
            args.inputs.len()
        )));
    }
    let cfg = load_config(&args.common)?;
    let mut sets = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        sets.push(io::read_trajectories(&read_file(path)?, path)?);
    }
    let total: usize = sets.iter().map(Vec::len).sum();
    let fused = tracknms(sets, &cfg.post);
    eprintln!("fuse: {total} pooled -> {} trajectories", fused.len());
    write_file(&args.out, &io::write_trajectories(&fused))
}

pub fn run_eval(args: &EvalArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let predictions = io::read_trajectories(&read_file(&args.pred)?, &args.pred)?;
    let ground_truth = io::read_trajectories(&read_file(&args.gt)?, &args.gt)?;
    let report = mcmot::evalsim::evaluate(&predictions, &ground_truth, &cfg.eval_thresholds)?;
    print!("{}", report.to_table());
    if let Some(path) = &args.report {
        write_file(path, &io::write_report(&report))?;
    }
    Ok(())
}

pub fn run_sim(args: &SimArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let spec = cfg.scenario()?;
    let out = simulate(&spec)?;

    let dir = Path::new(&args.out_dir);
    fs::create_dir_all(dir)
        .map_err(|e| Error::input(format!("cannot create {}: {e}", dir.display())))?;
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();

    write_file(&path("gt.txt"), &io::write_trajectories(&out.ground_truth))?;
    write_file(&path("det.txt"), &io::write_detections(&out.detections))?;
    write_file(&path("emb.txt"), &io::write_embeddings(&out.embeddings))?;
    write_file(&path("cam.txt"), &io::write_transforms(&out.transforms))?;
    eprintln!(
        "sim: {} objects, {} frames, {} detections -> {}",
        spec.objects.len(),
        spec.num_frames,
        out.detections.len(),
        dir.display()
    );
    Ok(())
}
