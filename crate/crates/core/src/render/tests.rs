use super::*;
use crate::deform::{PlaneSplitRegion, RegionDef};
use crate::field::{AnalyticField, Primitive, RigidlyMoved, Shape};
use crate::geom::{axis_angle, Aabb, Affine, Plane};
use crate::lookup::TriShell;
use crate::mesh::{cube_grid, single_tet, DeformedState};

fn blocks() -> AnalyticField {
    let b = |min: [f64; 3], max: [f64; 3], d: f64, c: [f64; 3]| Primitive {
        shape: Shape::Box { min, max },
        density: d,
        color: c,
        lobe: None,
    };
    AnalyticField::new(vec![
        b([-0.613, -0.527, -0.389], [0.217, 0.293, 0.508], 4.0, [0.9, 0.2, 0.1]),
        b([0.093, -0.211, -0.702], [0.688, 0.617, 0.104], 8.0, [0.1, 0.8, 0.3]),
    ])
}

fn camera(size: u32) -> Camera {
    Camera::look_at(Vec3::new(0.5, -3.5, 1.2), Vec3::zeros(), Vec3::z(), 0.7, size, size, 0.5, 7.0)
}

fn cage() -> crate::mesh::TetCage {
    cube_grid([3, 3, 3], Vec3::repeat(-1.0), Vec3::repeat(1.0))
}

fn cage_support() -> Support {
    Support {
        bounds: Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)),
        world_to_local: Affine::identity(),
    }
}

fn max_diff(a: &Frame, b: &Frame) -> f64 {
    a.rgb
        .iter()
        .zip(&b.rgb)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
        .fold(0.0, f64::max)
}

fn psnr(a: &Frame, b: &Frame) -> f64 {
    let mse: f64 = a
        .rgb
        .iter()
        .zip(&b.rgb)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).powi(2)))
        .sum::<f64>()
        / (3 * a.rgb.len()) as f64;
    10.0 * (1.0 / mse).log10()
}

#[test]
fn empty_scene_is_background() {
    let cfg = RenderConfig {
        background: [0.2, 0.4, 0.6],
        ..Default::default()
    };
    let cam = camera(2);
    let frame = render_image(&DirectScene::default(), &AnalyticField::default(), &cam, &cfg).unwrap();
    assert!(frame.rgb.iter().all(|p| *p == [0.2, 0.4, 0.6]));
    assert!(frame.opacity.iter().all(|&o| o == 0.0));
}

#[test]
fn ray_missing_cage_is_background() {
    let scene = CageScene::rest(cage());
    let cfg = RenderConfig {
        background: [0.3, 0.3, 0.3],
        ..Default::default()
    };
    let ray = Ray::new(Vec3::new(5.0, 5.0, 5.0), Vec3::x());
    let r = render_ray(&scene, &blocks(), &ray, 0.0, 10.0, &cfg, 0).unwrap();
    assert_eq!(r.color, Vec3::repeat(0.3));
    assert_eq!(r.opacity, 0.0);
}

#[test]
fn flat_box_filling_frustum_is_uniform() {
    let field = AnalyticField::single_box(Vec3::repeat(-50.0), Vec3::repeat(50.0), 3.0, [0.4, 0.5, 0.6]);
    let cam = camera(8);
    let cfg = RenderConfig::default();
    let frame = render_image(&DirectScene::default(), &field, &cam, &cfg).unwrap();
    let first = frame.rgb[0];
    for p in &frame.rgb {
        for c in 0..3 {
            assert!((p[c] - first[c]).abs() < 1e-9);
        }
    }
    assert!((first[0] - 0.4).abs() < 1e-3);
}

#[test]
fn identity_cage_matches_direct_rendering() {
    let scene = CageScene::rest(cage());
    let direct = DirectScene {
        support: Some(cage_support()),
    };
    let cam = camera(24);
    for mode in [SamplingMode::TwoStageExtended, SamplingMode::SingleStage] {
        let cfg = RenderConfig {
            mode,
            ..Default::default()
        };
        let a = render_image(&scene, &blocks(), &cam, &cfg).unwrap();
        let b = render_image(&direct, &blocks(), &cam, &cfg).unwrap();
        assert!(max_diff(&a, &b) < 1e-6, "{:?}: {}", mode, max_diff(&a, &b));
        assert!(a.opacity.iter().any(|&o| o > 0.5));
    }
}

#[test]
fn rotated_cage_matches_rotated_field() {
    let c = cage();
    let rot = axis_angle(&Vec3::new(0.2, 0.1, 1.0).normalize(), std::f64::consts::FRAC_PI_2);
    let shift = Vec3::new(0.1, -0.2, 0.05);
    let state = DeformedState::from_fn(&c, |p| rot * p + shift);
    let scene = CageScene::new(c, Vec::new(), state, 0.05, 3).unwrap();
    let moved = RigidlyMoved {
        inner: blocks(),
        rotation: rot,
        translation: shift,
    };
    let direct = DirectScene {
        support: Some(Support {
            bounds: Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)),
            world_to_local: Affine::from_parts(rot, shift).inverse().unwrap(),
        }),
    };
    let cam = camera(32);
    let cfg = RenderConfig::default();
    let a = render_image(&scene, &blocks(), &cam, &cfg).unwrap();
    let b = render_image(&direct, &moved, &cam, &cfg).unwrap();
    assert!(psnr(&a, &b) > 40.0, "psnr {}", psnr(&a, &b));
}

#[test]
fn thread_count_does_not_change_output() {
    let c = cage();
    let state = DeformedState::from_fn(&c, |p| p + Vec3::new(0.1 * p.z * p.z, 0.0, 0.05 * p.x));
    let scene = CageScene::new(c, Vec::new(), state, 0.05, 1).unwrap();
    let cfg = RenderConfig {
        jitter: true,
        seed: 11,
        ..Default::default()
    };
    let cam = camera(16);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| render_image(&scene, &blocks(), &cam, &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn early_termination_is_bounded() {
    let scene = CageScene::rest(cage());
    let cam = camera(16);
    let full = RenderConfig {
        termination: 0.0,
        ..Default::default()
    };
    let early = RenderConfig {
        termination: 1e-4,
        ..Default::default()
    };
    let a = render_image(&scene, &blocks(), &cam, &full).unwrap();
    let b = render_image(&scene, &blocks(), &cam, &early).unwrap();
    assert!(max_diff(&a, &b) < 1e-3);
}

#[test]
fn per_point_and_interpolated_mapping_agree() {
    let c = cage();
    let state = DeformedState::from_fn(&c, |p| p + Vec3::new(0.15 * p.y * p.y, 0.1 * p.x, 0.0));
    let scene = CageScene::new(c, Vec::new(), state, 0.05, 1).unwrap();
    let cam = camera(16);
    let a = render_image(&scene, &blocks(), &cam, &RenderConfig::default()).unwrap();
    let cfg = RenderConfig {
        mapping: MappingMode::PerPoint,
        ..Default::default()
    };
    let b = render_image(&scene, &blocks(), &cam, &cfg).unwrap();
    assert!(psnr(&a, &b) > 50.0);
}

#[test]
fn gap_override_uses_gap_colour() {
    // a lone tet far away keeps the cage non-empty
    let cage = single_tet([
        Vec3::new(10.0, 10.0, 10.0),
        Vec3::new(11.0, 10.0, 10.0),
        Vec3::new(10.0, 11.0, 10.0),
        Vec3::new(10.0, 10.0, 11.0),
    ])
    .unwrap();
    let split = PlaneSplitRegion {
        shell: TriShell::cuboid(Vec3::repeat(-1.0), Vec3::repeat(1.0)),
        plane_top: Plane::new(Vec3::new(0.0, 0.0, 0.2), Vec3::z()),
        plane_bottom: Plane::new(Vec3::new(0.0, 0.0, -0.2), Vec3::z()),
        transform_top: Affine::identity(),
        transform_bottom: Affine::identity(),
        gap_color: [0.1, 0.9, 0.2],
    };
    let state = DeformedState::rest(&cage);
    let scene = CageScene::new(cage, vec![RegionDef::PlaneSplit(split)], state, 1.0, 0).unwrap();
    let field = AnalyticField::default();
    let cfg = RenderConfig::default();
    let down = |x: f64| Ray::new(Vec3::new(x, 0.1, 3.0), -Vec3::z());
    // from above: empty top part, then the gap
    let r = render_ray(&scene, &field, &down(0.0), 0.0, 10.0, &cfg, 0).unwrap();
    assert!((r.color - Vec3::new(0.1, 0.9, 0.2)).norm() < 1e-12);
    assert_eq!(r.opacity, 1.0);
    // sideways through the top part only
    let side = Ray::new(Vec3::new(-3.0, 0.1, 0.5), Vec3::x());
    let r = render_ray(&scene, &field, &side, 0.0, 10.0, &cfg, 0).unwrap();
    assert_eq!(r.opacity, 0.0);
    // an opaque block in the top part hides the gap
    let wall = AnalyticField::single_box(Vec3::new(-1.0, -1.0, 0.5), Vec3::new(1.0, 1.0, 0.9), 200.0, [1.0, 1.0, 1.0]);
    let r = render_ray(&scene, &wall, &down(0.0), 0.0, 10.0, &cfg, 0).unwrap();
    assert!((r.color - Vec3::repeat(1.0)).norm() < 1e-3);
}

#[test]
fn weights_are_bounded() {
    let scene = CageScene::rest(cage());
    let mut ws = Workspace::new();
    let cam = camera(8);
    for j in 0..8 {
        for i in 0..8 {
            let ray = cam.pixel_ray(i, j);
            let r = render_ray_with(&scene, &blocks(), &ray, cam.near, cam.far, &RenderConfig::default(), 0, &mut ws).unwrap();
            let s = ws.samples();
            let sum: f64 = s.iter().map(|x| x.weight).sum();
            assert!((sum - r.opacity).abs() < 1e-12 && sum <= 1.0 + 1e-12);
            for k in 1..s.len() {
                assert!(s[k].transmittance <= s[k - 1].transmittance);
                assert!(s[k].s >= s[k - 1].s);
                assert!(s[k].weight <= s[k].transmittance + 1e-15);
            }
            assert!(s.iter().all(|x| x.t >= cam.near && x.t <= cam.far));
        }
    }
}

#[test]
fn rotated_views_follow_the_cage() {
    // lobe lit from +x in canonical space; rotating the cage by 90 degrees
    // about z must carry the highlight with it
    let c = cage();
    let rot = axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2);
    let state = DeformedState::from_fn(&c, |p| rot * p);
    let scene = CageScene::new(c, Vec::new(), state, 0.05, 0).unwrap();
    let field = AnalyticField::new(vec![Primitive {
        shape: Shape::Sphere {
            center: [0.0; 3],
            radius: 0.6,
        },
        density: 5.0,
        color: [0.2, 0.2, 0.2],
        lobe: Some(crate::field::Lobe {
            axis: [1.0, 0.0, 0.0],
            strength: 0.8,
            exponent: 2.0,
        }),
    }]);
    let cfg = RenderConfig::default();
    // deformed-space view along -y corresponds to canonical -x: facing the lobe
    let ray = Ray::new(Vec3::new(0.0, 3.0, 0.0), -Vec3::y());
    let lit = render_ray(&scene, &field, &ray, 0.0, 6.0, &cfg, 0).unwrap();
    let flat = RenderConfig {
        rotate_views: false,
        ..Default::default()
    };
    let unlit = render_ray(&scene, &field, &ray, 0.0, 6.0, &flat, 0).unwrap();
    assert!(lit.color.x > unlit.color.x + 0.5);
}

