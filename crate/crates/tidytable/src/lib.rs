pub mod geometry;
pub(crate) mod knn;
pub mod planner;
