//! Bundled synthetic dataset for the Columbia (116th) to NYU (8th) corridor.
//!
//! The station file lays out the 1 line from 116th down to 14th St, the
//! R line from 42nd to 8th, a C line branch from 59th and an L connector to
//! Union Sq. Travel times are plausible but made up. The incident file is a
//! seeded draw from a handful of spatial clusters over 2018–2019, with a few
//! out-of-range and malformed rows mixed in.

/// Station connectivity CSV (`station,train,prev_stop,next_stop,time_min,lat,lon`).
pub const STATIONS_CSV: &str = include_str!("../fixtures/stations.csv");

/// Incident CSV (`occurred_at,latitude,longitude`).
pub const INCIDENTS_CSV: &str = include_str!("../fixtures/incidents.csv");

/// Raw weighted edge list containing a negative cycle reachable from `A`.
pub const NEGATIVE_CYCLE_EDGES_CSV: &str = include_str!("../fixtures/negative_cycle_edges.csv");

pub const CORRIDOR_SOURCE: &str = "116th";
pub const CORRIDOR_TARGET: &str = "8th";

/// The 16-station route expected between [`CORRIDOR_SOURCE`] and [`CORRIDOR_TARGET`].
pub const CORRIDOR_PATH: [&str; 16] = [
    "116th",
    "110th",
    "103rd",
    "96th Red",
    "86th Red",
    "79th",
    "72nd Red",
    "66th",
    "59th",
    "50th Red",
    "42nd",
    "34th Yellow Orange",
    "28th Yellow",
    "23rd Yellow",
    "Union Sq",
    "8th",
];
