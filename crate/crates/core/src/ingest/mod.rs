//! File formats: labeled scans, TUM trajectories, cluster maps and descriptor
//! databases.

mod cloud;
mod map_file;
mod poses;

pub use cloud::{read_cloud, write_cloud, SemanticPointCloud};
pub use map_file::{
    read_cluster_map, read_descriptor_db, write_cluster_map, write_descriptor_db, ClusterMap,
    CLUSTER_MAP_VERSION, DESCRIPTOR_DB_VERSION,
};
pub use poses::{format_pose_line, read_poses, write_poses, StampedPose};
