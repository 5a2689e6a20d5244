//! Triangulated scene graph, descriptor hash table and raw correspondence
//! generation.

mod db;
mod triangle;

#[cfg(test)]
mod tests;

pub use db::{
    build_db, generate_correspondences, query_db, Correspondence, DescriptorDb, QueryParams, TriangleMatch,
};
pub use triangle::{is_admissible, quantize_key, triangulate, TriangleDescriptor, TriangleKey, TriangulationParams};
