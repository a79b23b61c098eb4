//! Deterministic debug splat renderer: pinhole projection, screen-space
//! isotropic Gaussian footprints, and front-to-back alpha compositing in
//! strict depth order (stable tie-break by splat index). Not a
//! photorealism path; images exist to eyeball trajectories and for golden
//! tests.

use rayon::prelude::*;
use std::io::Write;

use crate::scene::Splat;
use crate::{Real, Vec3};

/// Footprint cutoff in units of the projected radius.
const FOOTPRINT_CUTOFF: Real = 3.0;

/// Pinhole camera. `up` must not be parallel to the view direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians, in (0, pi).
    pub vertical_fov: Real,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Camera basis (right, up, back): view direction is -back.
    fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let back = (self.position - self.look_at).normalize();
        let right = self.up.cross(&back).normalize();
        let up = back.cross(&right);
        (right, up, back)
    }
}

/// Float RGB image plus the per-pixel transmittance left after
/// compositing (1 = background fully visible).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB, each channel in [0, 1].
    pub pixels: Vec<[Real; 3]>,
    /// Row-major final transmittance per pixel.
    pub transmittance: Vec<Real>,
}

impl Image {
    pub fn pixel(&self, x: usize, y: usize) -> [Real; 3] {
        self.pixels[y * self.width + x]
    }

    /// Binary PPM (P6, maxval 255) encoding of the image.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.pixels.len() * 3);
        write!(out, "P6\n{} {}\n255\n", self.width, self.height).unwrap();
        for px in &self.pixels {
            for c in px {
                out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn write_ppm(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_ppm())
    }
}

struct Projected {
    /// Pixel-space center.
    u: Real,
    v: Real,
    /// Projected Gaussian radius in pixels.
    radius_px: Real,
    opacity: Real,
    color: [Real; 3],
    depth: Real,
    index: usize,
}

/// Renders depth-sorted splats with front-to-back alpha compositing:
/// per-pixel alpha is `opacity * exp(-r^2 / (2 s^2))` with `s` the
/// projected radius, cut off beyond three radii; remaining transmittance
/// goes to the background. Splats behind the camera are skipped.
pub fn render_frame(splats: &[Splat], camera: &Camera, background: [Real; 3]) -> Image {
    assert!(camera.width > 0 && camera.height > 0);
    assert!(camera.vertical_fov > 0.0 && camera.vertical_fov < std::f64::consts::PI);
    let (right, up, back) = camera.basis();
    let focal_px = (camera.height as Real / 2.0) / (camera.vertical_fov / 2.0).tan();
    let cx = (camera.width as Real - 1.0) / 2.0;
    let cy = (camera.height as Real - 1.0) / 2.0;

    let mut projected: Vec<Projected> = splats
        .iter()
        .enumerate()
        .filter_map(|(index, splat)| {
            let rel = splat.position - camera.position;
            // Camera looks along -back; points in front have z < 0.
            let z = rel.dot(&back);
            if z >= -1e-9 {
                return None;
            }
            let inv_depth = 1.0 / -z;
            let u = cx + focal_px * rel.dot(&right) * inv_depth;
            let v = cy - focal_px * rel.dot(&up) * inv_depth;
            let radius_px = focal_px * splat.radius * inv_depth;
            Some(Projected {
                u,
                v,
                radius_px,
                opacity: splat.opacity,
                color: splat.color,
                depth: -z,
                index,
            })
        })
        .collect();
    // Strict front-to-back order; stable index tie-break keeps images
    // independent of input ordering.
    projected.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

    let width = camera.width;
    let mut pixels = vec![[0.0; 3]; width * camera.height];
    let mut transmittance = vec![1.0; width * camera.height];

    pixels
        .par_chunks_mut(width)
        .zip(transmittance.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, (row, trow))| {
            for x in 0..width {
                let mut color = [0.0; 3];
                let mut t = 1.0;
                for s in &projected {
                    if s.radius_px <= 0.0 {
                        continue;
                    }
                    let du = x as Real - s.u;
                    let dv = y as Real - s.v;
                    let r2 = du * du + dv * dv;
                    let cutoff = FOOTPRINT_CUTOFF * s.radius_px;
                    if r2 > cutoff * cutoff {
                        continue;
                    }
                    let alpha = s.opacity * (-r2 / (2.0 * s.radius_px * s.radius_px)).exp();
                    if alpha <= 0.0 {
                        continue;
                    }
                    for c in 0..3 {
                        color[c] += t * alpha * s.color[c];
                    }
                    t *= 1.0 - alpha;
                    if t < 1e-6 {
                        break;
                    }
                }
                for c in 0..3 {
                    color[c] += t * background[c];
                }
                row[x] = color;
                trow[x] = t;
            }
        });

    Image {
        width,
        height: camera.height,
        pixels,
        transmittance,
    }
}

/// `count` cameras evenly spaced in azimuth on a circle of `radius` at a
/// fixed `elevation` angle (radians), all looking at `center`.
pub fn orbit_cameras(
    count: usize,
    radius: Real,
    elevation: Real,
    center: Vec3,
    fov: Real,
    width: usize,
    height: usize,
) -> Vec<Camera> {
    assert!(count >= 1);
    (0..count)
        .map(|i| {
            let azimuth = std::f64::consts::TAU * i as Real / count as Real;
            let position = center
                + Vec3::new(
                    radius * elevation.cos() * azimuth.cos(),
                    radius * elevation.sin(),
                    radius * elevation.cos() * azimuth.sin(),
                );
            Camera {
                position,
                look_at: center,
                up: Vec3::new(0.0, 1.0, 0.0),
                vertical_fov: fov,
                width,
                height,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn head_on_camera(size: usize) -> Camera {
        Camera {
            position: Vec3::new(0.0, 0.0, 2.0),
            look_at: Vec3::zeros(),
            up: Vec3::new(0.0, 1.0, 0.0),
            vertical_fov: std::f64::consts::FRAC_PI_2,
            width: size,
            height: size,
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let image = render_frame(&[], &head_on_camera(16), [0.2, 0.4, 0.6]);
        for px in &image.pixels {
            assert_eq!(*px, [0.2, 0.4, 0.6]);
        }
        assert!(image.transmittance.iter().all(|&t| t == 1.0));
    }

    #[test]
    fn centered_opaque_splat_paints_its_color() {
        // Odd resolution keeps the optical axis on a pixel center, so the
        // falloff is exactly 1 there.
        let camera = head_on_camera(33);
        let splat = Splat::new(Vec3::zeros(), 0.2, 1.0, [0.9, 0.1, 0.3]);
        let image = render_frame(&[splat], &camera, [0.0, 0.0, 0.0]);
        let center = image.pixel(16, 16);
        assert_relative_eq!(center[0], 0.9, epsilon = 1e-12);
        assert_relative_eq!(center[1], 0.1, epsilon = 1e-12);
        assert_relative_eq!(center[2], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn two_splat_over_operator() {
        // Half-transparent white in front of opaque black on black
        // background: the center pixel is exactly mid grey.
        let camera = head_on_camera(33);
        let front = Splat::new(Vec3::new(0.0, 0.0, 0.5), 0.2, 0.5, [1.0, 1.0, 1.0]);
        let back = Splat::new(Vec3::new(0.0, 0.0, -0.5), 0.2, 1.0, [0.0, 0.0, 0.0]);
        let image = render_frame(&[front, back], &camera, [0.0, 0.0, 0.0]);
        assert_eq!(image.pixel(16, 16), [0.5, 0.5, 0.5]);
    }

    #[test]
    fn splats_behind_camera_are_skipped() {
        let camera = head_on_camera(17);
        let behind = Splat::new(Vec3::new(0.0, 0.0, 5.0), 0.5, 1.0, [1.0, 0.0, 0.0]);
        let image = render_frame(&[behind], &camera, [0.0, 0.0, 0.0]);
        assert!(image.pixels.iter().all(|px| *px == [0.0, 0.0, 0.0]));
    }

    fn random_scene(rng: &mut StdRng, n: usize) -> Vec<Splat> {
        (0..n)
            .map(|_| {
                Splat::new(
                    Vec3::new(
                        rng.gen_range(-0.5..0.5),
                        rng.gen_range(-0.5..0.5),
                        rng.gen_range(-0.5..0.5),
                    ),
                    rng.gen_range(0.05..0.3),
                    rng.gen_range(0.1..1.0),
                    [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                )
            })
            .collect()
    }

    #[test]
    fn compositing_is_invariant_to_input_order() {
        let mut rng = StdRng::seed_from_u64(31);
        let splats = random_scene(&mut rng, 12);
        let camera = head_on_camera(21);
        let image = render_frame(&splats, &camera, [0.1, 0.1, 0.1]);
        let mut shuffled = splats.clone();
        shuffled.reverse();
        shuffled.swap(0, 3);
        // Depth sort dominates as long as depths are distinct (random
        // scenes give distinct depths almost surely).
        let image2 = render_frame(&shuffled, &camera, [0.1, 0.1, 0.1]);
        assert_eq!(image.pixels, image2.pixels);
    }

    #[test]
    fn output_channels_stay_in_unit_range() {
        let mut rng = StdRng::seed_from_u64(32);
        for _ in 0..5 {
            let splats = random_scene(&mut rng, 20);
            let image = render_frame(&splats, &head_on_camera(15), [1.0, 1.0, 1.0]);
            for px in &image.pixels {
                for &c in px {
                    assert!((0.0..=1.0 + 1e-12).contains(&c), "channel {c}");
                }
            }
        }
    }

    #[test]
    fn transmittance_matches_direct_product() {
        // Re-derive each pixel's transmittance as a direct product of
        // (1 - alpha_i) over all contributing splats.
        let mut rng = StdRng::seed_from_u64(33);
        let splats = random_scene(&mut rng, 10);
        let camera = head_on_camera(13);
        let image = render_frame(&splats, &camera, [0.0, 0.0, 0.0]);

        let (right, up, back) = camera.basis();
        let focal = (camera.height as Real / 2.0) / (camera.vertical_fov / 2.0).tan();
        let cx = (camera.width as Real - 1.0) / 2.0;
        let cy = (camera.height as Real - 1.0) / 2.0;
        for y in 0..camera.height {
            for x in 0..camera.width {
                let mut t = 1.0;
                for s in &splats {
                    let rel = s.position - camera.position;
                    let z = rel.dot(&back);
                    if z >= -1e-9 {
                        continue;
                    }
                    let u = cx + focal * rel.dot(&right) / -z;
                    let v = cy - focal * rel.dot(&up) / -z;
                    let rp = focal * s.radius / -z;
                    let r2 = (x as Real - u).powi(2) + (y as Real - v).powi(2);
                    if rp <= 0.0 || r2 > (3.0 * rp) * (3.0 * rp) {
                        continue;
                    }
                    let alpha = s.opacity * (-r2 / (2.0 * rp * rp)).exp();
                    if alpha > 0.0 {
                        t *= 1.0 - alpha;
                    }
                }
                let got = image.transmittance[y * camera.width + x];
                // The renderer may stop early once t < 1e-6.
                assert!(
                    (got - t).abs() < 1e-6,
                    "pixel ({x},{y}): {got} vs product {t}"
                );
            }
        }
    }

    #[test]
    fn orbit_cameras_are_evenly_spaced() {
        let center = Vec3::new(1.0, 2.0, 3.0);
        let cameras = orbit_cameras(4, 2.0, 0.3, center, 1.0, 64, 64);
        assert_eq!(cameras.len(), 4);
        for (i, cam) in cameras.iter().enumerate() {
            assert_relative_eq!((cam.position - center).norm(), 2.0, epsilon = 1e-9);
            assert_eq!(cam.look_at, center);
            let azimuth = std::f64::consts::TAU * i as Real / 4.0;
            let expected = center
                + Vec3::new(
                    2.0 * 0.3_f64.cos() * azimuth.cos(),
                    2.0 * 0.3_f64.sin(),
                    2.0 * 0.3_f64.cos() * azimuth.sin(),
                );
            assert_relative_eq!(cam.position, expected, epsilon = 1e-12);
        }
        let single = orbit_cameras(1, 2.0, 0.0, center, 1.0, 8, 8);
        assert_relative_eq!(
            single[0].position,
            center + Vec3::new(2.0, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn ppm_encoding_shape() {
        let image = render_frame(&[], &head_on_camera(8), [1.0, 0.0, 0.0]);
        let ppm = image.to_ppm();
        assert!(ppm.starts_with(b"P6\n8 8\n255\n"));
        assert_eq!(ppm.len(), b"P6\n8 8\n255\n".len() + 8 * 8 * 3);
        assert_eq!(&ppm[b"P6\n8 8\n255\n".len()..][..3], &[255, 0, 0]);
    }
}
