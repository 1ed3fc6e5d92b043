pub mod error;
pub mod floorplan;
pub mod geom;
pub mod grid;
pub mod par;
pub mod pathgen;
pub mod mapops;
pub mod sensor;
pub mod seq;
pub mod evalstats;
pub mod infogain;
pub mod pipeline;
pub mod synthetic;
