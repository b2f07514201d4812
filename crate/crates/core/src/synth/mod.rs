//! Training data synthesis: coarse labels, crowdsourced points and
//! procedural scenes.

mod blur;
mod contour;
mod dataset;
mod points;
mod scene;

pub use blur::{coarsen_mask, gaussian_blur, gaussian_kernel};
pub use contour::{extract_contours, Contour};
pub use dataset::{gen_dataset, DatasetSpec, DatasetSummary, MAX_POINTS, MIN_POINTS};
pub use points::{
    allocate_points, apply_gps_noise, mean_nearest_neighbor, rasterize_points,
    rasterize_points_stamped, sample_points, sample_points_sm, sample_points_tdc, NoiseLevel,
    NoiseShape, ScenarioConfig,
};
pub use scene::{gen_scene, SceneParams};
