//! Scene and manifest documents. Relative paths resolve against the directory
//! of the JSON file that names them.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tetmorph::anim::{self, DeformRig, PoseParams};
use tetmorph::deform::{PlaneSplitRegion, RegionDef, RigidRegion};
use tetmorph::field::{AnalyticField, RadianceField, VoxelField};
use tetmorph::io::{read_obj_shell, read_tetcage, read_tetframe};
use tetmorph::render::image::{read_ppm, Rgb};
use tetmorph::render::{Camera, RenderConfig};
use tetmorph::{Affine, DeformedState, Plane, TetCage};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| anyhow!("{}: {e}", path.display()))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum FieldRef {
    Path(String),
    Inline { analytic: AnalyticField },
}

pub enum LoadedField {
    Voxel(VoxelField),
    Analytic(AnalyticField),
}

impl LoadedField {
    pub fn as_field(&self) -> &dyn RadianceField {
        match self {
            LoadedField::Voxel(v) => v,
            LoadedField::Analytic(a) => a,
        }
    }
}

pub fn load_field(base: &Path, r: &FieldRef) -> Result<LoadedField> {
    match r {
        FieldRef::Path(p) => {
            let path = resolve(base, p);
            let f = VoxelField::read_from(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
            Ok(LoadedField::Voxel(f))
        }
        FieldRef::Inline { analytic } => Ok(LoadedField::Analytic(analytic.clone())),
    }
}

fn identity12() -> [f64; 12] {
    Affine::identity().to_row_major()
}

#[derive(Clone, Debug, Deserialize)]
#[allow(clippy::large_enum_variant)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionConfig {
    Rigid {
        shell: String,
        /// Deformed to canonical, row-major 3x4.
        #[serde(default = "identity12")]
        transform: [f64; 12],
    },
    PlaneSplit {
        shell: String,
        plane_top: Plane,
        plane_bottom: Plane,
        #[serde(default = "identity12")]
        transform_top: [f64; 12],
        #[serde(default = "identity12")]
        transform_bottom: [f64; 12],
        gap_color: [f64; 3],
    },
}

pub fn load_regions(base: &Path, regions: &[RegionConfig]) -> Result<Vec<RegionDef>> {
    regions
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let shell_of = |p: &str| {
                let path = resolve(base, p);
                read_obj_shell(open(&path)?).with_context(|| format!("reading {}", path.display()))
            };
            let def = match r {
                RegionConfig::Rigid { shell, transform } => RegionDef::Rigid(RigidRegion {
                    shell: shell_of(shell)?,
                    transform: Affine::from_row_major(transform),
                }),
                RegionConfig::PlaneSplit {
                    shell,
                    plane_top,
                    plane_bottom,
                    transform_top,
                    transform_bottom,
                    gap_color,
                } => RegionDef::PlaneSplit(PlaneSplitRegion {
                    shell: shell_of(shell)?,
                    plane_top: *plane_top,
                    plane_bottom: *plane_bottom,
                    transform_top: Affine::from_row_major(transform_top),
                    transform_bottom: Affine::from_row_major(transform_bottom),
                    gap_color: *gap_color,
                }),
            };
            def.validate().with_context(|| format!("region {i}"))?;
            Ok(def)
        })
        .collect()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationConfig {
    pub rho: f64,
    pub seed: u64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        RotationConfig { rho: 0.05, seed: 0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub field: FieldRef,
    #[serde(default)]
    pub cage: Option<String>,
    #[serde(default)]
    pub regions: Vec<RegionConfig>,
    /// Per-frame vertex files, in frame order.
    #[serde(default)]
    pub frames: Vec<String>,
    /// Rig plus parameter CSV, as an alternative to `frames`.
    #[serde(default)]
    pub rig: Option<String>,
    #[serde(default)]
    pub params: Option<String>,
    #[serde(default)]
    pub cameras: Vec<String>,
    #[serde(default)]
    pub background: Option<[f64; 3]>,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub rotation: RotationConfig,
}

/// Where per-frame deformed states come from.
pub enum FrameSource {
    Rest,
    Files(Vec<PathBuf>),
    Rig { rig: DeformRig, params: Vec<(u64, PoseParams)> },
}

impl FrameSource {
    /// Frame indices in output order.
    pub fn indices(&self) -> Vec<u64> {
        match self {
            FrameSource::Rest => vec![0],
            FrameSource::Files(f) => (0..f.len() as u64).collect(),
            FrameSource::Rig { params, .. } => params.iter().map(|p| p.0).collect(),
        }
    }

    pub fn state(&self, cage: &TetCage, frame: u64) -> Result<DeformedState> {
        match self {
            FrameSource::Rest => Ok(DeformedState::rest(cage)),
            FrameSource::Files(files) => {
                let path = files.get(frame as usize).ok_or_else(|| anyhow!("no frame {frame}"))?;
                read_tetframe(open(path)?, cage).with_context(|| format!("reading {}", path.display()))
            }
            FrameSource::Rig { rig, params } => {
                let (_, p) = params.iter().find(|p| p.0 == frame).ok_or_else(|| anyhow!("no parameters for frame {frame}"))?;
                anim::pose(rig, cage, p).with_context(|| format!("posing frame {frame}"))
            }
        }
    }
}

pub struct LoadedScene {
    pub field: LoadedField,
    pub cage: Option<TetCage>,
    pub regions: Vec<RegionDef>,
    pub frames: FrameSource,
    pub cameras: Vec<Camera>,
    pub render: RenderConfig,
    pub rotation: RotationConfig,
}

pub fn load_cage(path: &Path) -> Result<TetCage> {
    read_tetcage(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn load_rig(path: &Path) -> Result<(DeformRig, TetCage)> {
    let file = anim::read_defrig(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    let cage = load_cage(&resolve(&base_dir(path), &file.cage))?;
    let rig = file.into_rig(&cage).with_context(|| format!("rig {}", path.display()))?;
    Ok((rig, cage))
}

pub fn load_params(path: &Path, rig: &DeformRig) -> Result<Vec<(u64, PoseParams)>> {
    let p = anim::read_params_csv(open(path)?, rig.blendshapes().len(), rig.bone_count())
        .with_context(|| format!("reading {}", path.display()))?;
    for w in p.windows(2) {
        if w[1].0 <= w[0].0 {
            bail!("{}: frame indices must increase", path.display());
        }
    }
    Ok(p)
}

pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    let cfg: SceneConfig = read_json(path)?;
    let base = base_dir(path);
    let field = load_field(&base, &cfg.field)?;
    let mut cage = cfg.cage.as_deref().map(|c| load_cage(&resolve(&base, c))).transpose()?;
    let frames = match (&cfg.rig, cfg.frames.is_empty()) {
        (Some(_), false) => bail!("{}: give either 'frames' or 'rig', not both", path.display()),
        (Some(r), true) => {
            let (rig, rig_cage) = load_rig(&resolve(&base, r))?;
            let params_path = cfg.params.as_deref().ok_or_else(|| anyhow!("{}: 'rig' needs 'params'", path.display()))?;
            let params = load_params(&resolve(&base, params_path), &rig)?;
            match &cage {
                Some(c) if c.vertex_count() != rig_cage.vertex_count() => {
                    bail!("{}: rig cage has {} vertices, scene cage has {}", path.display(), rig_cage.vertex_count(), c.vertex_count())
                }
                Some(_) => {}
                None => cage = Some(rig_cage),
            }
            FrameSource::Rig { rig, params }
        }
        (None, false) => FrameSource::Files(cfg.frames.iter().map(|f| resolve(&base, f)).collect()),
        (None, true) => FrameSource::Rest,
    };
    if cage.is_none() && (!matches!(frames, FrameSource::Rest) || !cfg.regions.is_empty()) {
        bail!("{}: frames and regions need a cage", path.display());
    }
    let regions = load_regions(&base, &cfg.regions)?;
    let cameras = cfg
        .cameras
        .iter()
        .map(|c| read_json::<Camera>(&resolve(&base, c)))
        .collect::<Result<_>>()?;
    let mut render = cfg.render;
    if let Some(bg) = cfg.background {
        render.background = bg;
    }
    Ok(LoadedScene {
        field,
        cage,
        regions,
        frames,
        cameras,
        render,
        rotation: cfg.rotation,
    })
}

/// Reads a PPM or PNG image with channels scaled to [0, 1].
pub fn load_image(path: &Path) -> Result<Rgb> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "ppm" => read_ppm(open(path)?).with_context(|| format!("reading {}", path.display())),
        "png" => {
            let img = image::open(path).with_context(|| format!("reading {}", path.display()))?.into_rgb32f();
            let data = img.pixels().map(|p| p.0.map(f64::from)).collect();
            Ok(Rgb::new(img.width(), img.height(), data))
        }
        _ => bail!("{}: unsupported image type (use .ppm or .png)", path.display()),
    }
}

/// Foreground where the mean channel exceeds one half.
pub fn load_mask(path: &Path) -> Result<(u32, u32, Vec<bool>)> {
    let img = load_image(path)?;
    Ok((img.width, img.height, img.data.iter().map(|p| (p[0] + p[1] + p[2]) / 3.0 > 0.5).collect()))
}
