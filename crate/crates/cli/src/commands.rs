//! The six pipeline commands. Each command validates its inputs, computes
//! through the library, writes its artifacts atomically, and prints a short
//! report. File outputs are a pure function of the configuration and seed,
//! so reruns are byte-identical.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ghostlab_core::estimators::MomentSummary;
use ghostlab_core::frames::pgm::{render_f64, write_pgm, PgmImage, RenderScale};
use ghostlab_core::frames::{gis1, Displacement, FrameStack, Region};
use ghostlab_core::imaging::{bucket, ghost2, ghost3, visibility, GhostImage};
use ghostlab_core::registration::{register_pair, PairRegistration, SearchBounds};
use ghostlab_core::specklesim::simulate;

use crate::artifacts::{
    key_values_to_text, parse_key_values, read_ghost_csv, sidecar_path, write_text,
};
use crate::config::PipelineConfig;

pub const ARM_FILES: [&str; 3] = ["arm1.gis1", "arm2.gis1", "arm3.gis1"];

/// Simulate the three arms and persist stacks plus ground truth.
pub fn cmd_simulate(cfg: &PipelineConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let sim = cfg.sim_config()?;
    let out = simulate(&sim)?;

    for (stack, name) in out.arms.iter().zip(ARM_FILES) {
        gis1::write_stack(stack, &out_dir.join(name))?;
    }
    let gt = out.ground_truth.to_key_values();
    write_text(&out_dir.join("ground_truth.txt"), &key_values_to_text(&gt))?;
    write_pgm(
        &out.ground_truth.object.to_pgm(),
        &out_dir.join("object_mask.pgm"),
    )?;

    println!(
        "simulated {}x{} x {} frames, seed {}",
        cfg.grid_width, cfg.grid_height, cfg.n_frames, cfg.seed
    );
    for (i, stack) in out.arms.iter().enumerate() {
        let mean = stack.pixels().iter().sum::<f64>() / stack.pixels().len() as f64;
        println!("arm {}: mean intensity {:.3} counts", i + 1, mean);
    }
    Ok(())
}

fn load_stack(path: &Path) -> Result<FrameStack> {
    gis1::read_stack(path).with_context(|| format!("loading {}", path.display()))
}

fn anchor_and_search(cfg: &PipelineConfig) -> Result<(Region, SearchBounds)> {
    let anchor = cfg
        .anchor
        .ok_or_else(|| anyhow!("registration needs anchor_x/anchor_y/anchor_width/anchor_height"))?;
    let (sx, sy) = cfg
        .search
        .ok_or_else(|| anyhow!("registration needs search_dx and search_dy"))?;
    Ok((anchor, SearchBounds::symmetric(sx, sy)))
}

fn report_pair(label: &str, pair: &PairRegistration) {
    let r = &pair.result;
    println!(
        "{label}: d_max = ({}, {}), peak = {:.4}, fwhm_x = {:.3} px, fwhm_y = {:.3} px, distance = {:.3} px",
        r.d_max.dx, r.d_max.dy, r.peak_value, r.fwhm_x, r.fwhm_y, r.distance
    );
    if r.on_boundary {
        eprintln!("warning: {label}: correlation peak sits on the search window boundary");
    }
    let skipped = pair.map.skipped_frames();
    if skipped > 0 {
        eprintln!("warning: {label}: {skipped} frame evaluations skipped (zero spatial variance)");
    }
}

fn write_map_artifacts(out_dir: &Path, stem: &str, pair: &PairRegistration) -> Result<()> {
    write_text(&out_dir.join(format!("{stem}.csv")), &pair.map.to_csv())?;
    let (img, scale) = pair.map.to_pgm()?;
    write_pgm(&img, &out_dir.join(format!("{stem}.pgm")))?;
    write_render_sidecar(&out_dir.join(format!("{stem}.pgm")), &scale, &[])?;
    Ok(())
}

fn pair_key_values(prefix: &str, pair: &PairRegistration) -> Vec<(String, String)> {
    let r = &pair.result;
    vec![
        (format!("{prefix}_dx"), r.d_max.dx.to_string()),
        (format!("{prefix}_dy"), r.d_max.dy.to_string()),
        (format!("{prefix}_peak"), r.peak_value.to_string()),
        (format!("{prefix}_fwhm_x"), r.fwhm_x.to_string()),
        (format!("{prefix}_fwhm_y"), r.fwhm_y.to_string()),
        (format!("{prefix}_distance"), r.distance.to_string()),
        (format!("{prefix}_on_boundary"), r.on_boundary.to_string()),
    ]
}

/// Register arms against each other on the anchor region.
///
/// Without explicit stacks this runs the full chain (arm 2 against arm 1,
/// then arm 3 against arm 2) on the simulate outputs in `out_dir` and
/// writes `registration.txt` for the reconstruct step. With `--ref` and
/// `--probe` it registers one explicit pair.
pub fn cmd_register(
    cfg: &PipelineConfig,
    out_dir: &Path,
    reference: Option<&Path>,
    probe: Option<&Path>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let (anchor, search) = anchor_and_search(cfg)?;

    match (reference, probe) {
        (Some(r), Some(p)) => {
            let stack_ref = load_stack(r)?;
            let stack_probe = load_stack(p)?;
            let pair = register_pair(&stack_ref, anchor, &stack_probe, anchor, search)?;
            report_pair("probe vs ref", &pair);
            write_map_artifacts(out_dir, "corrmap", &pair)?;
            write_text(
                &out_dir.join("registration.txt"),
                &key_values_to_text(&pair_key_values("d", &pair)),
            )?;
        }
        (None, None) => {
            let arm1 = load_stack(&out_dir.join(ARM_FILES[0]))?;
            let arm2 = load_stack(&out_dir.join(ARM_FILES[1]))?;
            let arm3 = load_stack(&out_dir.join(ARM_FILES[2]))?;
            let pair12 = register_pair(&arm1, anchor, &arm2, anchor, search)?;
            let anchor2 = anchor.shift(pair12.result.d_max, arm2.width(), arm2.height())?;
            let pair23 = register_pair(&arm2, anchor2, &arm3, anchor2, search)?;
            report_pair("arm2 vs arm1", &pair12);
            report_pair("arm3 vs arm2", &pair23);
            write_map_artifacts(out_dir, "corrmap_arm2_vs_arm1", &pair12)?;
            write_map_artifacts(out_dir, "corrmap_arm3_vs_arm2", &pair23)?;
            let mut kv = pair_key_values("d12", &pair12);
            kv.extend(pair_key_values("d23", &pair23));
            write_text(&out_dir.join("registration.txt"), &key_values_to_text(&kv))?;
        }
        _ => bail!("--ref and --probe must be given together"),
    }
    Ok(())
}

fn displacement_from(text: &str, what: &str) -> Result<Displacement> {
    let (dx, dy) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("{what}: expected DX,DY, got {text:?}"))?;
    Ok(Displacement::new(
        dx.trim().parse().with_context(|| format!("{what}: bad dx {dx:?}"))?,
        dy.trim().parse().with_context(|| format!("{what}: bad dy {dy:?}"))?,
    ))
}

fn registered_displacements(
    out_dir: &Path,
    d12: Option<&str>,
    d23: Option<&str>,
) -> Result<(Displacement, Displacement)> {
    if let (Some(a), Some(b)) = (d12, d23) {
        return Ok((
            displacement_from(a, "--d12")?,
            displacement_from(b, "--d23")?,
        ));
    }
    if d12.is_some() || d23.is_some() {
        bail!("--d12 and --d23 must be given together");
    }
    let path = out_dir.join("registration.txt");
    let text = std::fs::read_to_string(&path).with_context(|| {
        format!(
            "reading {} (run the register command first or pass --d12/--d23)",
            path.display()
        )
    })?;
    let kv = parse_key_values(&text);
    let get = |key: &str| -> Result<i32> {
        kv.get(key)
            .ok_or_else(|| anyhow!("{}: missing key {key}", path.display()))?
            .parse()
            .with_context(|| format!("{}: bad value for {key}", path.display()))
    };
    Ok((
        Displacement::new(get("d12_dx")?, get("d12_dy")?),
        Displacement::new(get("d23_dx")?, get("d23_dy")?),
    ))
}

fn write_render_sidecar(
    pgm_path: &Path,
    scale: &RenderScale,
    extra: &[(String, String)],
) -> Result<()> {
    let mut kv = vec![
        ("render_min".to_string(), scale.min.to_string()),
        ("render_max".to_string(), scale.max.to_string()),
        (
            "render_undefined_pixels".to_string(),
            scale.undefined.to_string(),
        ),
        ("render_degenerate".to_string(), scale.degenerate.to_string()),
    ];
    kv.extend_from_slice(extra);
    write_text(&sidecar_path(pgm_path), &key_values_to_text(&kv))
}

fn write_ghost_artifacts(out_dir: &Path, stem: &str, image: &GhostImage) -> Result<()> {
    write_text(&out_dir.join(format!("{stem}.csv")), &image.to_csv())?;
    let (pgm, scale) = image.to_pgm()?;
    write_pgm(&pgm, &out_dir.join(format!("{stem}.pgm")))?;
    let mut kv: Vec<(String, String)> = vec![
        ("order".into(), image.order.to_string()),
        ("n_frames".into(), image.n_frames.to_string()),
        ("width".into(), image.width.to_string()),
        ("height".into(), image.height.to_string()),
        (
            "undefined_pixels".into(),
            (image.values.len() - image.defined_count()).to_string(),
        ),
        ("render_min".into(), scale.min.to_string()),
        ("render_max".into(), scale.max.to_string()),
        ("render_degenerate".into(), scale.degenerate.to_string()),
    ];
    for (k, v) in &image.provenance {
        kv.push((format!("provenance_{k}"), v.clone()));
    }
    write_text(&out_dir.join(format!("{stem}.txt")), &key_values_to_text(&kv))?;
    Ok(())
}

/// Reconstruct ghost images of the requested order from the simulate
/// outputs in `out_dir` plus registration results.
pub fn cmd_reconstruct(
    cfg: &PipelineConfig,
    out_dir: &Path,
    order: u8,
    d12: Option<&str>,
    d23: Option<&str>,
) -> Result<()> {
    if order != 2 && order != 3 {
        bail!("unsupported correlation order {order} (expected 2 or 3)");
    }
    let r1 = cfg
        .r1
        .ok_or_else(|| anyhow!("reconstruction needs r1_x/r1_y/r1_width/r1_height"))?;
    let (d12, d23) = registered_displacements(out_dir, d12, d23)?;

    let arm1 = load_stack(&out_dir.join(ARM_FILES[0]))?;
    let arm2 = load_stack(&out_dir.join(ARM_FILES[1]))?;
    let arm3 = load_stack(&out_dir.join(ARM_FILES[2]))?;
    let bucket_series = bucket(&arm1, r1)?;
    let r2 = r1.shift(d12, arm2.width(), arm2.height())?;
    let d13 = Displacement::new(d12.dx + d23.dx, d12.dy + d23.dy);
    let r3 = r1.shift(d13, arm3.width(), arm3.height())?;

    if order == 2 {
        for (stack, region, d, stem) in [
            (&arm2, r2, d12, "ghost2_arm2"),
            (&arm3, r3, d13, "ghost2_arm3"),
        ] {
            let mut image = ghost2(&bucket_series, stack, region)?;
            image
                .provenance
                .insert("displacement".into(), format!("{},{}", d.dx, d.dy));
            write_ghost_artifacts(out_dir, stem, &image)?;
            let defined = image.defined_count();
            println!(
                "{stem}: {}x{} image over {} frames ({} defined pixels)",
                image.width, image.height, image.n_frames, defined
            );
        }
    } else {
        let mut image = ghost3(&bucket_series, &arm2, r2, &arm3, r3)?;
        image.provenance.insert(
            "displacements".into(),
            format!("{},{};{},{}", d12.dx, d12.dy, d13.dx, d13.dy),
        );
        write_ghost_artifacts(out_dir, "ghost3", &image)?;
        println!(
            "ghost3: {}x{} image over {} frames ({} defined pixels)",
            image.width,
            image.height,
            image.n_frames,
            image.defined_count()
        );
    }
    Ok(())
}

/// Score a reconstructed image with the visibility metric.
pub fn cmd_visibility(cfg: &PipelineConfig, image_path: &Path, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let back = cfg
        .back
        .ok_or_else(|| anyhow!("visibility needs back_x/back_y/back_width/back_height"))?;
    let obj = cfg
        .obj
        .ok_or_else(|| anyhow!("visibility needs obj_x/obj_y/obj_width/obj_height"))?;
    let image = read_ghost_csv(image_path)?;
    let report = visibility(&image, back, obj)?;

    println!(
        "order {} visibility: V = {:.6} ± {:.6}",
        report.order, report.v, report.v_stderr
    );
    println!(
        "c_back = {:.6} (n = {}), c_obj = {:.6} (n = {})",
        report.cj_back, report.n_back, report.cj_obj, report.n_obj
    );

    let stem = image_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    let csv = format!(
        "order,v,v_stderr,c_back,c_obj,n_back,n_obj\n{},{},{},{},{},{},{}\n",
        report.order,
        report.v,
        report.v_stderr,
        report.cj_back,
        report.cj_obj,
        report.n_back,
        report.n_obj
    );
    write_text(&out_dir.join(format!("visibility_{stem}.csv")), &csv)?;
    Ok(())
}

/// Pooled intensity statistics over a stack region.
pub fn cmd_stats(stack_path: &Path, region: Option<Region>, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let stack = load_stack(stack_path)?;
    let region = region.unwrap_or_else(|| stack.full_region());

    let mut summary = MomentSummary::<1>::new();
    let mut max_value = 0.0f64;
    for f in 0..stack.n_frames() {
        let view = stack.view(f, region)?;
        for row in view.rows() {
            for &v in row {
                summary.accumulate([v]);
                max_value = max_value.max(v);
            }
        }
    }
    let mean = summary.mean(0);
    let g2 = summary.g2_zero();
    println!(
        "region ({}, {}) {}x{}: n = {}",
        region.x0,
        region.y0,
        region.width,
        region.height,
        summary.n()
    );
    println!("mean = {mean:.6}");
    println!("mu2 = {:.6}", summary.mu2(0));
    println!("mu3 = {:.6}", summary.mu3(0));
    match g2 {
        Some(g2) => println!("g2_zero = {g2:.6}"),
        None => println!("g2_zero = undefined (zero mean)"),
    }

    // 64-bin histogram over [0, max].
    let bins = 64usize;
    let width = if max_value > 0.0 { max_value / bins as f64 } else { 1.0 };
    let mut counts = vec![0u64; bins];
    for f in 0..stack.n_frames() {
        let view = stack.view(f, region)?;
        for row in view.rows() {
            for &v in row {
                let b = ((v / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
    }
    let mut csv = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in counts.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{}\n",
            i as f64 * width,
            (i + 1) as f64 * width,
            c
        ));
    }
    let stem = stack_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("stack");
    write_text(&out_dir.join(format!("histogram_{stem}.csv")), &csv)?;
    Ok(())
}

/// Render a stack frame or an exported ghost image as a PGM heatmap.
pub fn cmd_render(input: &Path, frame: u32, output: &Path) -> Result<()> {
    let ext = input
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default();
    let (width, height, values): (u32, u32, Vec<Option<f64>>) = match ext {
        "gis1" => {
            let stack = load_stack(input)?;
            if frame >= stack.n_frames() {
                bail!(
                    "frame index {frame} out of range for {} frames",
                    stack.n_frames()
                );
            }
            let values = stack.frame(frame).iter().map(|&v| Some(v)).collect();
            (stack.width(), stack.height(), values)
        }
        "csv" => {
            let image = read_ghost_csv(input)?;
            (image.width, image.height, image.values)
        }
        other => bail!("cannot render {other:?} files (expected .gis1 or .csv)"),
    };
    let (img, scale): (PgmImage, RenderScale) = render_f64(width, height, &values)?;
    write_pgm(&img, output)?;
    write_render_sidecar(output, &scale, &[])?;
    println!(
        "rendered {}x{} to {} (min {}, max {}, {} undefined)",
        width,
        height,
        output.display(),
        scale.min,
        scale.max,
        scale.undefined
    );
    Ok(())
}

/// Parse an `X,Y,WIDTH,HEIGHT` region flag.
pub fn region_from_flag(text: &str) -> Result<Region> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        bail!("expected X,Y,WIDTH,HEIGHT, got {text:?}");
    }
    let nums: Vec<u32> = parts
        .iter()
        .map(|p| p.parse::<u32>().with_context(|| format!("bad region component {p:?}")))
        .collect::<Result<_>>()?;
    Ok(Region::new(nums[0], nums[1], nums[2], nums[3])?)
}
