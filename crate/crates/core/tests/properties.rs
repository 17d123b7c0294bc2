use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tetmorph::anim::{pose, transfer_weights, DeformRig, PoseParams};
use tetmorph::deform::{build_rotation_field, map_point, map_sample_on_segment, Mapped, PlaneSplitRegion, Part};
use tetmorph::field::{FieldResponse, RadianceField, VoxelField};
use tetmorph::fit::sparsity_loss;
use tetmorph::geom::axis_angle;
use tetmorph::mesh::{barycentric_coords, cube_grid, reconstruct, signed_volume, single_tet, Bary};
use tetmorph::render::sampling::{fine_sample, SampleSet};
use tetmorph::render::{render_ray, DirectScene, RenderConfig, SamplingMode};
use tetmorph::{Aabb, Affine, Bvh, DeformedState, Plane, Ray, Region, TetCage, TriShell, Vec3};

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    [-r..r, -r..r, -r..r].prop_map(|[x, y, z]| Vec3::new(x, y, z))
}

fn unit() -> impl Strategy<Value = Vec3> {
    vec3(1.0).prop_filter("non-zero", |v| v.norm() > 0.1).prop_map(|v| v.normalize())
}

fn fat_tet() -> impl Strategy<Value = [Vec3; 4]> {
    [vec3(1.0), vec3(1.0), vec3(1.0), vec3(1.0)]
        .prop_filter("well shaped", |t| signed_volume(t).abs() > 0.02)
        .prop_map(|mut t| {
            if signed_volume(&t) < 0.0 {
                t.swap(2, 3);
            }
            t
        })
}

fn convex_weights() -> impl Strategy<Value = [f64; 4]> {
    [0.0..1.0f64, 0.0..1.0, 0.0..1.0, 0.0..1.0]
        .prop_filter("non-zero", |w| w.iter().sum::<f64>() > 1e-3)
        .prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.map(|x| x / s)
        })
}

fn warp(p: &Vec3, k: f64) -> Vec3 {
    p + Vec3::new(k * (1.3 * p.y).sin(), k * p.x * p.z, -k * (0.9 * p.x).cos())
}

/// Smooth density blob for quadrature checks.
struct Blob {
    center: Vec3,
    width: f64,
    peak: f64,
    /// Adds `ramp * (z + 1)` so the density differs at the ends of a ray.
    ramp: f64,
}

impl RadianceField for Blob {
    fn query(&self, p: &Vec3, _v: &Vec3) -> FieldResponse {
        FieldResponse {
            density: self.peak * (-(p - self.center).norm_squared() / (self.width * self.width)).exp() + self.ramp * (p.z + 1.0).max(0.0),
            color: Vec3::new(0.7, 0.5, 0.3),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convex_combination_has_valid_barycentrics(t in fat_tet(), w in convex_weights()) {
        let p = reconstruct(&Bary(w), &t);
        let b = barycentric_coords(&t, &p).unwrap();
        prop_assert!((b.sum() - 1.0).abs() < 1e-9);
        for (got, want) in b.0.iter().zip(&w) {
            prop_assert!(*got >= -1e-9 && *got <= 1.0 + 1e-9);
            prop_assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn reconstruct_inverts_barycentrics(t in fat_tet(), p in vec3(2.0)) {
        let b = barycentric_coords(&t, &p).unwrap();
        prop_assert!((reconstruct(&b, &t) - p).norm() < 1e-9);
    }

    #[test]
    fn face_table_counts(nx in 1usize..4, ny in 1usize..4, nz in 1usize..4) {
        let cage = cube_grid([nx, ny, nz], Vec3::zeros(), Vec3::repeat(1.0));
        let sides: usize = cage.faces().iter().map(|f| if f.is_boundary() { 1 } else { 2 }).sum();
        prop_assert_eq!(sides, 4 * cage.tet_count());
    }

    #[test]
    fn bruteforce_location_ignores_vertex_order(t in fat_tet(), p in vec3(1.2), perm in 0usize..12) {
        // the even permutations of four indices keep the volume positive
        const EVEN: [[usize; 4]; 12] = [
            [0, 1, 2, 3], [0, 2, 3, 1], [0, 3, 1, 2], [1, 0, 3, 2], [1, 2, 0, 3], [1, 3, 2, 0],
            [2, 0, 1, 3], [2, 1, 3, 0], [2, 3, 0, 1], [3, 0, 2, 1], [3, 1, 0, 2], [3, 2, 1, 0],
        ];
        let a = single_tet(t).unwrap();
        let b = TetCage::new(EVEN[perm].map(|i| t[i]).to_vec(), vec![[0, 1, 2, 3]]).unwrap();
        prop_assert_eq!(
            a.locate_point_bruteforce(a.rest_vertices(), &p),
            b.locate_point_bruteforce(b.rest_vertices(), &p)
        );
    }

    #[test]
    fn segments_cover_inside_and_map_linearly(o in vec3(2.5), d in unit(), k in 0.0..0.1f64, ts in prop::collection::vec(0.0..6.0f64, 8)) {
        let cage = cube_grid([2, 2, 2], Vec3::repeat(-1.0), Vec3::repeat(1.0));
        let state = DeformedState::from_fn(&cage, |p| warp(p, k));
        let bvh = Bvh::build(&cage, &state.vertices, &[]);
        let ray = Ray::new(o, d);
        let segs = bvh.segment_ray(&cage, &ray, 0.0, 6.0).unwrap();
        for w in segs.segments.windows(2) {
            prop_assert!(w[0].t_enter < w[0].t_exit);
            prop_assert!(w[0].t_exit <= w[1].t_enter + 1e-12);
            if w[0].tet.is_some() && w[1].tet.is_some() {
                prop_assert!((w[0].t_exit - w[1].t_enter).abs() < 1e-7);
            }
        }
        let diam = cage.diameter();
        for t in ts {
            let p = ray.at(t);
            let truth = bvh.locate_point_bruteforce(&cage, &p);
            let got = segs.region_at(t);
            if got != truth {
                // only allowed within rounding distance of a face
                let near = segs.segments.iter().any(|s| (s.t_enter - t).abs() < 1e-7 || (s.t_exit - t).abs() < 1e-7);
                prop_assert!(near, "t={t}: {got:?} vs {truth:?}");
                continue;
            }
            if let Some(seg) = segs.segments.iter().find(|s| s.tet.is_some() && s.t_enter <= t && t <= s.t_exit) {
                let alpha = (seg.t_exit - t) / seg.len();
                let per_ray = map_sample_on_segment(seg, alpha).unwrap();
                let Mapped::Canonical { point, .. } = map_point(&cage, &state.vertices, &[], seg.region, &p).unwrap() else {
                    panic!("tet sample did not map");
                };
                prop_assert!((per_ray - point).norm() < 1e-6 * diam);
            }
        }
    }

    #[test]
    fn identity_deformation_maps_identically(p in vec3(0.99), v in unit(), rho in 0.05..1.0f64, seed in any::<u64>()) {
        let cage = cube_grid([2, 2, 2], Vec3::repeat(-1.0), Vec3::repeat(1.0));
        let rest = cage.rest_vertices().to_vec();
        let bvh = Bvh::build(&cage, &rest, &[]);
        let region = bvh.locate_point(&cage, &p);
        let Mapped::Canonical { point, placement } = map_point(&cage, &rest, &[], region, &p).unwrap() else {
            panic!("interior point did not map");
        };
        prop_assert!((point - p).norm() < 1e-9);
        let rot = build_rotation_field(&cage, &rest, &[], rho, seed).unwrap();
        prop_assert!((rot.rotate_view(placement, &v).unwrap() - v).norm() < 1e-9);
    }

    #[test]
    fn rigid_motion_is_recovered(axis in unit(), angle in -3.0..3.0f64, shift in vec3(1.0), rho in 0.05..1.0f64, seed in any::<u64>(), p in vec3(0.99)) {
        let cage = cube_grid([2, 2, 2], Vec3::repeat(-1.0), Vec3::repeat(1.0));
        let r0 = axis_angle(&axis, angle);
        let state = DeformedState::from_fn(&cage, |x| r0 * x + shift);
        let field = build_rotation_field(&cage, &state.vertices, &[], rho, seed).unwrap();
        for r in field.tet_rotations() {
            prop_assert!((r - r0).norm() < 1e-9);
        }
        let again = build_rotation_field(&cage, &state.vertices, &[], rho, seed).unwrap();
        prop_assert_eq!(field.tet_rotations(), again.tet_rotations());
        let q = r0 * p + shift;
        let bvh = Bvh::build(&cage, &state.vertices, &[]);
        let region = bvh.locate_point(&cage, &q);
        let Mapped::Canonical { point, .. } = map_point(&cage, &state.vertices, &[], region, &q).unwrap() else {
            panic!("interior point did not map");
        };
        prop_assert!((point - r0.transpose() * (q - shift)).norm() < 1e-9);
    }

    #[test]
    fn plane_split_partitions_the_shell(p in vec3(1.0), lo in -0.5..0.0f64, gap in 0.01..0.5f64, n in unit()) {
        let region = PlaneSplitRegion {
            shell: TriShell::cuboid(Vec3::repeat(-1.0), Vec3::repeat(1.0)),
            plane_top: Plane::new(n * (lo + gap), n),
            plane_bottom: Plane::new(n * lo, n),
            transform_top: Affine::identity(),
            transform_bottom: Affine::identity(),
            gap_color: [0.0; 3],
        };
        let h = p.dot(&n);
        let want = if h >= lo + gap { Some(Part::Top) } else if h <= lo { Some(Part::Bottom) } else { None };
        // stay clear of the planes themselves
        prop_assume!((h - lo).abs() > 1e-9 && (h - lo - gap).abs() > 1e-9);
        prop_assert_eq!(region.classify(&p), want);
    }

    #[test]
    fn trilinear_stays_within_neighbours(seed in any::<u64>(), p in vec3(1.0)) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = VoxelField::new([4, 5, 3], Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)), 0, 0.0);
        for x in field.params_mut() {
            *x = rng.random_range(-3.0..3.0);
        }
        let s = field.stencil(&p).unwrap();
        let vals: Vec<f64> = s.voxels.iter().map(|&v| field.params()[field.density_index(v)]).collect();
        let interp: f64 = vals.iter().zip(&s.weights).map(|(a, w)| a * w).sum();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(interp >= lo - 1e-12 && interp <= hi + 1e-12);
        let [i, j, k] = [rng.random_range(0..4), rng.random_range(0..5), rng.random_range(0..3)];
        let c = field.voxel_center(i, j, k);
        let s = field.stencil(&c).unwrap();
        let at: f64 = s.voxels.iter().zip(&s.weights).map(|(&v, w)| field.params()[field.density_index(v)] * w).sum();
        prop_assert!((at - field.params()[field.density_index(field.voxel_index(i, j, k))]).abs() < 1e-12);
    }

    #[test]
    fn compositing_weights_are_bounded(sig in prop::collection::vec(0.0..50.0f64, 1..40), extra in 0.0..5.0f64, at in any::<prop::sample::Index>()) {
        let n = sig.len();
        let t: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let color = vec![Vec3::new(0.3, 0.6, 0.9); n];
        let mut set = SampleSet::new(t.clone(), 1.0, sig.clone(), color.clone());
        let out = set.integrate(&Vec3::zeros());
        let total: f64 = set.weights.iter().sum();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&total));
        for i in 0..n {
            prop_assert!(set.weights[i] >= 0.0 && set.weights[i] <= set.transmittance[i] + 1e-15);
            prop_assert!(set.transmittance[i] <= 1.0);
            if i > 0 {
                prop_assert!(set.transmittance[i] <= set.transmittance[i - 1]);
            }
        }
        let mut denser = sig;
        denser[at.index(n)] += extra;
        let more = SampleSet::new(t, 1.0, denser, color).integrate(&Vec3::zeros());
        prop_assert!(more.opacity >= out.opacity - 1e-15);
    }

    #[test]
    fn fine_samples_stay_in_range_and_reach_neighbours(w in prop::collection::vec(0.0..1.0f64, 8..64), spike in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let n = w.len();
        let coarse: Vec<f64> = (0..n).map(|i| 0.5 + i as f64 * 0.03).collect();
        let mut weights: Vec<f64> = w.iter().map(|x| x * 0.01).collect();
        let k = spike.index(n);
        let rest: f64 = weights.iter().sum::<f64>() - weights[k];
        weights[k] = 1.0 - rest;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        fine_sample(&coarse, &weights, 64, SamplingMode::TwoStageExtended, Some(&mut rng), &mut out).unwrap();
        prop_assert!(out.iter().all(|t| *t >= coarse[0] && *t <= coarse[n - 1]));
        prop_assert!(out.windows(2).all(|p| p[0] <= p[1]));
        // expected fine samples in each interval next to the spike
        let (edges, pdf) = tetmorph::render::sampling::bins(&coarse, &weights, SamplingMode::TwoStageExtended);
        let total: f64 = pdf.iter().sum();
        let expected = |lo: f64, hi: f64| -> f64 {
            edges.windows(2).zip(&pdf).map(|(e, m)| {
                let overlap = (e[1].min(hi) - e[0].max(lo)).max(0.0);
                if e[1] > e[0] { m / total * overlap / (e[1] - e[0]) } else { 0.0 }
            }).sum::<f64>() * 64.0
        };
        if k > 0 {
            prop_assert!(expected(coarse[k - 1], coarse[k]) >= 1.0);
        }
        if k + 2 < n {
            prop_assert!(expected(coarse[k + 1], coarse[k + 2]) >= 1.0);
        }
    }

    #[test]
    fn early_termination_is_invisible(c in vec3(0.3), width in 0.2..0.6f64, peak in 1.0..60.0f64, o in vec3(0.4)) {
        let blob = Blob { center: c, width, peak, ramp: 0.0 };
        let ray = Ray::new(Vec3::new(o.x, o.y, -2.0), Vec3::z());
        let full = RenderConfig { termination: 0.0, full_range: true, ..Default::default() };
        let early = RenderConfig { termination: 1e-4, ..full.clone() };
        let a = render_ray(&DirectScene::default(), &blob, &ray, 0.5, 3.5, &full, 0).unwrap();
        let b = render_ray(&DirectScene::default(), &blob, &ray, 0.5, 3.5, &early, 0).unwrap();
        prop_assert!((a.color - b.color).amax() < 1e-3);
    }

    #[test]
    fn sparsity_is_nonnegative_and_monotone(s in prop::collection::vec(0.0..20.0f64, 1..30), bump in 1e-3..2.0f64, at in any::<prop::sample::Index>()) {
        let (l, _) = sparsity_loss(&s, 1e-3, 100);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, s.iter().all(|x| *x == 0.0));
        let mut more = s.clone();
        more[at.index(s.len())] += bump;
        prop_assert!(sparsity_loss(&more, 1e-3, 100).0 > l);
    }

    #[test]
    fn pose_is_linear_in_blend_coefficients(seed in any::<u64>(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        use rand::Rng;
        let cage = cube_grid([1, 1, 1], Vec3::zeros(), Vec3::repeat(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut delta = || (0..cage.vertex_count()).map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 0.1).collect::<Vec<_>>();
        let shapes = vec![delta(), delta()];
        let rig = DeformRig::new(cage.rest_vertices().to_vec(), shapes.clone(), 1, vec![1.0; cage.vertex_count()]).unwrap();
        let at = |beta: Vec<f64>| pose(&rig, &cage, &PoseParams { beta, theta: vec![Affine::identity()] });
        let mixed = at(vec![a, b]);
        prop_assume!(mixed.is_ok());
        for (v, x) in mixed.unwrap().vertices.iter().enumerate() {
            let want = cage.rest_vertices()[v] + shapes[0][v] * a + shapes[1][v] * b;
            prop_assert!((x - want).norm() < 1e-12);
        }
    }

    #[test]
    fn pose_is_rigidly_equivariant(axis in unit(), angle in -3.0..3.0f64, shift in vec3(2.0), beta in -1.0..1.0f64) {
        let cage = cube_grid([1, 1, 1], Vec3::zeros(), Vec3::repeat(1.0));
        let shape: Vec<Vec3> = cage.rest_vertices().iter().map(|p| p * 0.05).collect();
        let rig = DeformRig::new(cage.rest_vertices().to_vec(), vec![shape], 1, vec![1.0; cage.vertex_count()]).unwrap();
        let g = Affine::from_parts(axis_angle(&axis, angle), shift);
        let still = pose(&rig, &cage, &PoseParams { beta: vec![beta], theta: vec![Affine::identity()] }).unwrap();
        let moved = pose(&rig, &cage, &PoseParams { beta: vec![beta], theta: vec![g] }).unwrap();
        for (a, b) in still.vertices.iter().zip(&moved.vertices) {
            prop_assert!((g.apply(a) - b).norm() < 1e-12);
        }
    }

    #[test]
    fn transferred_weights_sum_to_one(raw in prop::collection::vec(prop::collection::vec(0.01..1.0f64, 3), 5..20), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let surface: Vec<Vec3> = raw.iter().map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let flat: Vec<f64> = raw.iter().flat_map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(move |x| x / s)
        }).collect();
        let cage = cube_grid([2, 1, 1], Vec3::zeros(), Vec3::repeat(1.0));
        let w = transfer_weights(&surface, &flat, 3, &cage).unwrap();
        for row in w.chunks(3) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn doubling_samples_halves_error(c in vec3(0.2), width in 0.25..0.45f64, peak in 0.5..4.0f64, ramp in 0.2..1.0f64, o in vec3(0.2)) {
        let blob = Blob { center: c, width, peak, ramp };
        let ray = Ray::new(Vec3::new(o.x, o.y, -1.0), Vec3::z());
        let (near, far) = (0.0, 2.0);
        // fine midpoint quadrature of the optical depth as the reference
        let m = 1 << 16;
        let h = (far - near) / m as f64;
        let tau: f64 = (0..m).map(|i| blob.query(&ray.at(near + (i as f64 + 0.5) * h), &ray.dir).density * h).sum();
        let exact = 1.0 - (-tau).exp();
        let err = |n: usize| {
            let cfg = RenderConfig { n_coarse: n, mode: SamplingMode::SingleStage, termination: 0.0, full_range: true, ..Default::default() };
            (render_ray(&DirectScene::default(), &blob, &ray, near, far, &cfg, 0).unwrap().opacity - exact).abs()
        };
        let e: Vec<f64> = [32, 64, 128].into_iter().map(err).collect();
        for w in e.windows(2) {
            prop_assert!(w[1] <= 0.5 * w[0] + 1e-9, "errors {e:?}");
        }
    }
}

#[test]
fn single_tet_region_ids() {
    let cage = single_tet([Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()]).unwrap();
    let bvh = Bvh::build(&cage, cage.rest_vertices(), &[]);
    assert_eq!(bvh.locate_point(&cage, &Vec3::repeat(0.1)), Region::Tet(0));
    assert_eq!(bvh.locate_point(&cage, &Vec3::repeat(2.0)), Region::Outside);
}
