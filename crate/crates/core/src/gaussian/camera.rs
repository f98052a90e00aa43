use crate::error::{Error, Result};
use crate::linalg::{cross3, mat_mul3, mat_t_vec3, mat_vec3, normalize3, sub3, transpose3, Mat3, Vec3};
use crate::scalar::Scalar;

/// Pinhole camera. `rotation`/`translation` map world points into camera
/// space (x right, y down, z forward); intrinsics are in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Scalar> Camera<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rotation: Mat3<T>,
        translation: Vec3<T>,
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self { rotation, translation, fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`; `up` is the approximate world up.
    pub fn look_at(eye: Vec3<T>, target: Vec3<T>, up: Vec3<T>, focal: T, width: usize, height: usize) -> Result<Self> {
        let forward = normalize3(sub3(target, eye));
        let right = normalize3(cross3(forward, up));
        // image y grows downward
        let down = cross3(forward, right);
        let rotation = [right, down, forward];
        let t = mat_vec3(&rotation, eye);
        let half = T::lit(0.5);
        Self::new(
            rotation,
            [-t[0], -t[1], -t[2]],
            focal,
            focal,
            T::from_usize(width).unwrap() * half,
            T::from_usize(height).unwrap() * half,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let intrinsics = [self.fx, self.fy, self.cx, self.cy];
        let mut all = self.rotation.iter().flatten().chain(self.translation.iter()).chain(intrinsics.iter());
        if !all.all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("non-finite parameter".into()));
        }
        if self.fx <= T::zero() || self.fy <= T::zero() {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.cx <= T::zero() || self.cy <= T::zero() {
            return Err(Error::InvalidCamera("principal point must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("empty image".into()));
        }
        let rtr = mat_mul3(&transpose3(&self.rotation), &self.rotation);
        for (i, row) in rtr.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let e = if i == j { T::one() } else { T::zero() };
                if (*v - e).abs().to_f64_lossy() > 1e-6 {
                    return Err(Error::InvalidCamera("rotation is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    /// World-space camera center `-Rᵀ t`.
    pub fn center(&self) -> Vec3<T> {
        let c = mat_t_vec3(&self.rotation, self.translation);
        [-c[0], -c[1], -c[2]]
    }

    pub fn world_to_camera(&self, p: Vec3<T>) -> Vec3<T> {
        let r = mat_vec3(&self.rotation, p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn cast<U: Scalar>(&self) -> Camera<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        Camera {
            rotation: self.rotation.map(|row| row.map(c)),
            translation: self.translation.map(c),
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            width: self.width,
            height: self.height,
        }
    }
}
