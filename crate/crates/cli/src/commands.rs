use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tetmorph::anim;
use tetmorph::field::{RadianceField, VoxelField};
use tetmorph::fit::{fit_with, LossConfig, TrainSet, TrainView};
use tetmorph::io::write_tetframe;
use tetmorph::metrics::psnr;
use tetmorph::render::image::{write_f32, write_ppm, Rgb};
use tetmorph::render::{render_image_timed, CageScene, Camera, DirectScene, Medium, RenderConfig, StageTimes, Support};
use tetmorph::{Aabb, Affine, Bvh, DeformedState, Region, Vec3};

use crate::scene::{
    base_dir, load_cage, load_image, load_mask, load_params, load_regions, load_rig, load_scene, open, read_json, resolve, FieldRef, LoadedField,
    RegionConfig, RotationConfig,
};
use crate::Global;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn ms(d: Duration, g: &Global) -> String {
    if g.deterministic {
        "0".into()
    } else {
        format!("{:.3}", d.as_secs_f64() * 1e3)
    }
}

struct FrameTiming {
    pose: Duration,
    bvh: Duration,
}

#[allow(clippy::too_many_arguments)]
fn render_views<M: Medium>(
    g: &Global,
    medium: &M,
    field: &dyn RadianceField,
    cameras: &[Camera],
    cfg: &RenderConfig,
    frame: u64,
    per_frame: FrameTiming,
    out: &Path,
    f32: bool,
    timing: &mut impl Write,
) -> Result<()> {
    for (c, cam) in cameras.iter().enumerate() {
        let clock = Instant::now();
        let (img, t): (_, StageTimes) = render_image_timed(medium, field, cam, cfg).with_context(|| format!("frame {frame}, camera {c}"))?;
        let stem = format!("frame_{frame:04}_cam{c:02}");
        let mut w = create(&out.join(format!("{stem}.ppm")))?;
        write_ppm(&mut w, &Rgb::from(&img))?;
        w.flush()?;
        if f32 {
            let mut w = create(&out.join(format!("{stem}.f32")))?;
            write_f32(&mut w, &img)?;
            w.flush()?;
        }
        let wall = clock.elapsed();
        // per-frame costs go on the first camera's row
        let (pose, bvh) = if c == 0 { (per_frame.pose, per_frame.bvh) } else { (Duration::ZERO, Duration::ZERO) };
        writeln!(
            timing,
            "{frame},{c},{},{},{},{},{},{}",
            ms(pose, g),
            ms(bvh, g),
            ms(t.segmentation, g),
            ms(t.sampling, g),
            ms(t.integration, g),
            ms(wall, g)
        )?;
    }
    Ok(())
}

pub fn render(g: &Global, config: &Path, extra_cameras: &[PathBuf], out: &Path, range: Option<Range<u64>>, f32: bool) -> Result<()> {
    let mut sc = load_scene(config)?;
    for c in extra_cameras {
        sc.cameras.push(read_json(c)?);
    }
    if sc.cameras.is_empty() {
        bail!("no cameras: list them in the config or pass --camera");
    }
    if let Some(s) = g.seed {
        sc.render.seed = s;
    }
    sc.render.validate()?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut timing = create(&out.join("timing.csv"))?;
    writeln!(timing, "frame,camera,pose_ms,bvh_refit_ms,segmentation_ms,field_query_ms,integration_ms,wall_ms")?;
    let frames: Vec<u64> = sc.frames.indices().into_iter().filter(|f| range.as_ref().is_none_or(|r| r.contains(f))).collect();
    if frames.is_empty() {
        bail!("frame range selects no frames");
    }
    let field = sc.field.as_field();
    match &sc.cage {
        None => {
            let medium = DirectScene {
                support: match &sc.field {
                    LoadedField::Voxel(v) => Some(Support {
                        bounds: v.bounds(),
                        world_to_local: Affine::identity(),
                    }),
                    LoadedField::Analytic(_) => None,
                },
            };
            let zero = || FrameTiming {
                pose: Duration::ZERO,
                bvh: Duration::ZERO,
            };
            for &f in &frames {
                render_views(g, &medium, field, &sc.cameras, &sc.render, f, zero(), out, f32, &mut timing)?;
            }
        }
        Some(cage) => {
            let mut scene: Option<CageScene> = None;
            for &f in &frames {
                let clock = Instant::now();
                let state = sc.frames.state(cage, f)?;
                let pose = clock.elapsed();
                let clock = Instant::now();
                match scene.as_mut() {
                    Some(s) => {
                        s.set_state(state, None).with_context(|| format!("frame {f}"))?;
                    }
                    None => {
                        scene = Some(
                            CageScene::new(cage.clone(), sc.regions.clone(), state, sc.rotation.rho, sc.rotation.seed)
                                .with_context(|| format!("frame {f}"))?,
                        )
                    }
                }
                let bvh = clock.elapsed();
                let s = scene.as_ref().unwrap();
                render_views(g, s, field, &sc.cameras, &sc.render, f, FrameTiming { pose, bvh }, out, f32, &mut timing)?;
            }
        }
    }
    timing.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    resolution: [usize; 3],
    min: [f64; 3],
    max: [f64; 3],
    #[serde(default = "default_lmax")]
    lmax: usize,
    /// Raw (pre-softplus) initial density.
    #[serde(default = "default_density")]
    density_init: f64,
}

fn default_lmax() -> usize {
    2
}

fn default_density() -> f64 {
    -2.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewSpec {
    image: String,
    camera: String,
    #[serde(default)]
    mask: Option<String>,
    /// Vertex file of the frame the image shows; the rest state when absent.
    #[serde(default)]
    frame: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FitManifest {
    #[serde(default)]
    grid: Option<GridSpec>,
    /// Starting checkpoint, instead of `grid`.
    #[serde(default)]
    init: Option<String>,
    #[serde(default)]
    cage: Option<String>,
    #[serde(default)]
    regions: Vec<RegionConfig>,
    #[serde(default)]
    rotation: RotationConfig,
    views: Vec<ViewSpec>,
    #[serde(default)]
    render: RenderConfig,
    #[serde(default)]
    loss: LossConfig,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output: Option<String>,
    #[serde(default)]
    trace: Option<String>,
}

fn initial_field(base: &Path, m: &FitManifest) -> Result<VoxelField> {
    match (&m.grid, &m.init) {
        (Some(_), Some(_)) => bail!("give either 'grid' or 'init', not both"),
        (None, None) => bail!("missing 'grid' or 'init'"),
        (None, Some(p)) => match crate::scene::load_field(base, &FieldRef::Path(p.clone()))? {
            LoadedField::Voxel(v) => Ok(v),
            LoadedField::Analytic(_) => unreachable!(),
        },
        (Some(g), None) => {
            if g.resolution.contains(&0) {
                bail!("grid resolution must be positive");
            }
            if g.lmax > tetmorph::field::sh::MAX_DEGREE {
                bail!("grid lmax must be at most {}", tetmorph::field::sh::MAX_DEGREE);
            }
            if (0..3).any(|i| !(g.min[i] < g.max[i])) {
                bail!("grid min must lie below max");
            }
            Ok(VoxelField::new(g.resolution, Aabb::new(Vec3::from(g.min), Vec3::from(g.max)), g.lmax, g.density_init))
        }
    }
}

fn run_fit<M: Medium>(g: &Global, field: &mut VoxelField, train: &TrainSet<M>, render: &RenderConfig, loss: &LossConfig, seed: u64) -> Result<Vec<f64>> {
    let every = (loss.iterations / 20).max(1);
    let report = fit_with(field, train, render, loss, seed, |it, l| {
        if !g.deterministic && (it + 1) % every == 0 {
            eprintln!("iteration {:>6}  loss {l:.6e}", it + 1);
        }
    })?;
    Ok(report.losses)
}

pub fn fit(g: &Global, config: &Path, output: Option<PathBuf>, trace: Option<PathBuf>, iterations: Option<usize>) -> Result<()> {
    let m: FitManifest = read_json(config)?;
    let base = base_dir(config);
    let mut field = initial_field(&base, &m).with_context(|| format!("{}", config.display()))?;
    let mut loss = m.loss.clone();
    if let Some(n) = iterations {
        loss.iterations = n;
    }
    let seed = g.seed.unwrap_or(m.seed);
    let output = output
        .or_else(|| m.output.as_deref().map(|p| resolve(&base, p)))
        .with_context(|| "no checkpoint path: set 'output' or pass --output")?;
    let trace = trace.or_else(|| m.trace.as_deref().map(|p| resolve(&base, p)));

    let mut frame_of: BTreeMap<Option<String>, usize> = BTreeMap::new();
    let mut views = Vec::with_capacity(m.views.len());
    for (i, v) in m.views.iter().enumerate() {
        let image = load_image(&resolve(&base, &v.image))?;
        let camera: Camera = read_json(&resolve(&base, &v.camera))?;
        let mask = match &v.mask {
            Some(p) => {
                let (w, h, mask) = load_mask(&resolve(&base, p))?;
                if (w, h) != (image.width, image.height) {
                    bail!("view {i}: mask is {w}x{h}, image is {}x{}", image.width, image.height);
                }
                Some(mask)
            }
            None => None,
        };
        let n = frame_of.len();
        let frame = *frame_of.entry(v.frame.clone()).or_insert(n);
        views.push(TrainView { image, camera, mask, frame });
    }
    let mut ordered: Vec<(usize, Option<String>)> = frame_of.into_iter().map(|(k, v)| (v, k)).collect();
    ordered.sort();

    let losses = match &m.cage {
        None => {
            if ordered.iter().any(|(_, f)| f.is_some()) || !m.regions.is_empty() {
                bail!("{}: frames and regions need a cage", config.display());
            }
            let medium = DirectScene {
                support: Some(Support {
                    bounds: field.bounds(),
                    world_to_local: Affine::identity(),
                }),
            };
            let train = TrainSet { frames: vec![medium], views };
            run_fit(g, &mut field, &train, &m.render, &loss, seed)?
        }
        Some(c) => {
            let cage = load_cage(&resolve(&base, c))?;
            let regions = load_regions(&base, &m.regions)?;
            let mut frames = Vec::with_capacity(ordered.len());
            for (_, f) in &ordered {
                let state = match f {
                    None => DeformedState::rest(&cage),
                    Some(p) => {
                        let path = resolve(&base, p);
                        tetmorph::io::read_tetframe(open(&path)?, &cage).with_context(|| format!("reading {}", path.display()))?
                    }
                };
                frames.push(CageScene::new(cage.clone(), regions.clone(), state, m.rotation.rho, m.rotation.seed)?);
            }
            let train = TrainSet { frames, views };
            run_fit(g, &mut field, &train, &m.render, &loss, seed)?
        }
    };

    if let Some(parent) = output.parent() {
        fs::create_dir_all(parent).ok();
    }
    let mut w = create(&output)?;
    field.write_to(&mut w)?;
    w.flush()?;
    if let Some(t) = trace {
        let mut w = create(&t)?;
        writeln!(w, "iteration,loss")?;
        for (i, l) in losses.iter().enumerate() {
            writeln!(w, "{i},{l:?}")?;
        }
        w.flush()?;
    }
    Ok(())
}

fn image_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for e in fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))? {
        let e = e?;
        let name = e.file_name().to_string_lossy().into_owned();
        let ext = Path::new(&name).extension().and_then(|x| x.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("ppm" | "png")) && e.file_type()?.is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

pub fn metrics(rendered: &Path, reference: &Path, out: Option<&Path>) -> Result<()> {
    let names = image_files(reference)?;
    if names.is_empty() {
        bail!("no .ppm or .png images in {}", reference.display());
    }
    let mut rows = Vec::with_capacity(names.len());
    for n in &names {
        let a = load_image(&rendered.join(n))?;
        let b = load_image(&reference.join(n))?;
        rows.push((n.clone(), psnr(&a, &b).with_context(|| n.clone())?));
    }
    let mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    let mut table = String::from("image,psnr_db\n");
    for (n, p) in &rows {
        table.push_str(&format!("{n},{p:.4}\n"));
    }
    table.push_str(&format!("mean,{mean:.4}\n"));
    print!("{table}");
    if let Some(o) = out {
        fs::write(o, &table).with_context(|| format!("cannot write {}", o.display()))?;
    }
    Ok(())
}

fn read_points(path: &Path) -> Result<Vec<Vec3>> {
    let mut pts = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let v: Vec<f64> = body
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .ok()
            .filter(|v: &Vec<f64>| v.len() == 3)
            .with_context(|| format!("{}:{}: expected 'x y z'", path.display(), i + 1))?;
        pts.push(Vec3::new(v[0], v[1], v[2]));
    }
    Ok(pts)
}

fn region_cols(r: Region) -> (&'static str, String) {
    match r {
        Region::Outside => ("outside", String::new()),
        Region::Tet(t) => ("tet", t.to_string()),
        Region::Shell(s) => ("shell", s.to_string()),
    }
}

/// Returns `false` if `oracle` is set and some point disagrees.
pub fn locate(g: &Global, config: &Path, points: &Path, frame: Option<u64>, oracle: bool) -> Result<bool> {
    let sc = load_scene(config)?;
    let Some(cage) = &sc.cage else {
        bail!("{}: locate needs a cage", config.display());
    };
    let state = match frame {
        Some(f) => sc.frames.state(cage, f)?,
        None => DeformedState::rest(cage),
    };
    let shells: Vec<_> = sc.regions.iter().map(|r| r.shell()).collect();
    let mut bvh = Bvh::build(cage, &state.vertices, &shells);
    if let Some(s) = g.seed {
        bvh = bvh.with_locate_seed(s);
    }
    let pts = read_points(points)?;
    let mut out = std::io::stdout().lock();
    write!(out, "point,region,index,b0,b1,b2,b3")?;
    if oracle {
        write!(out, ",oracle_region,oracle_index,agree")?;
    }
    writeln!(out)?;
    let mut all_agree = true;
    for (i, p) in pts.iter().enumerate() {
        let r = bvh.locate_point(cage, p);
        let (kind, idx) = region_cols(r);
        let bary = match r {
            Region::Tet(t) => {
                let b = cage.barycentric(&state.vertices, t as usize, p)?;
                b.0.map(|x| format!("{x:.12}")).join(",")
            }
            _ => ",,,".into(),
        };
        write!(out, "{i},{kind},{idx},{bary}")?;
        if oracle {
            let o = bvh.locate_point_bruteforce(cage, p);
            let (ok, oi) = region_cols(o);
            all_agree &= o == r;
            write!(out, ",{ok},{oi},{}", o == r)?;
        }
        writeln!(out)?;
    }
    Ok(all_agree)
}

pub fn pose(rig_path: &Path, params: &Path, out: &Path, range: Option<Range<u64>>) -> Result<()> {
    let (rig, cage) = load_rig(rig_path)?;
    let params = load_params(params, &rig)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut written = 0;
    for (f, p) in params.iter().filter(|(f, _)| range.as_ref().is_none_or(|r| r.contains(f))) {
        let state = anim::pose(&rig, &cage, p).with_context(|| format!("frame {f}"))?;
        let mut w = create(&out.join(format!("frame_{f:04}.tetframe")))?;
        write_tetframe(&mut w, &state)?;
        w.flush()?;
        written += 1;
    }
    if written == 0 {
        bail!("frame range selects no frames");
    }
    Ok(())
}
