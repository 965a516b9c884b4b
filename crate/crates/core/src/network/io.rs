//! Delimited-text network and trip files.
//!
//! `nodes.csv`: `id,x,y,zone`; `edges.csv`:
//! `id,from,to,length_m,modes,speed_kmh,reconstruction_cost_per_m` with
//! `modes` a `|`-separated subset of `drive|cycle|walk`; `trips.csv`:
//! `id,origin,destination,mode,weight`. Ids must equal the 0-based row
//! index.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, Mode, Node, TransportNetwork, Trip, TripTable};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct NodeRow {
    id: usize,
    x: f64,
    y: f64,
    zone: usize,
}

#[derive(Serialize, Deserialize)]
struct EdgeRow {
    id: usize,
    from: usize,
    to: usize,
    length_m: f64,
    modes: String,
    speed_kmh: f64,
    reconstruction_cost_per_m: f64,
}

#[derive(Serialize, Deserialize)]
struct TripRow {
    id: usize,
    origin: usize,
    destination: usize,
    mode: String,
    weight: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(path.display().to_string(), line, e.to_string())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| csv_err(path, e))).collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn check_id(path: &Path, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::parse(
            path.display().to_string(),
            expected + 2,
            format!("id {got} out of order, expected {expected}"),
        ));
    }
    Ok(())
}

pub fn read_network(nodes_path: &Path, edges_path: &Path) -> Result<TransportNetwork> {
    let nodes = read_rows::<NodeRow>(nodes_path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            check_id(nodes_path, i, r.id)?;
            Ok(Node {
                x: r.x,
                y: r.y,
                zone: r.zone,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let edges = read_rows::<EdgeRow>(edges_path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            check_id(edges_path, i, r.id)?;
            Ok(Edge {
                from: r.from,
                to: r.to,
                length_m: r.length_m,
                modes: r.modes.parse()?,
                speed_kmh: r.speed_kmh,
                reconstruction_cost_per_m: r.reconstruction_cost_per_m,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TransportNetwork::new(nodes, edges)
}

pub fn write_network(net: &TransportNetwork, nodes_path: &Path, edges_path: &Path) -> Result<()> {
    write_rows(
        nodes_path,
        net.nodes.iter().enumerate().map(|(id, n)| NodeRow {
            id,
            x: n.x,
            y: n.y,
            zone: n.zone,
        }),
    )?;
    write_rows(
        edges_path,
        net.edges.iter().enumerate().map(|(id, e)| EdgeRow {
            id,
            from: e.from,
            to: e.to,
            length_m: e.length_m,
            modes: e.modes.to_string(),
            speed_kmh: e.speed_kmh,
            reconstruction_cost_per_m: e.reconstruction_cost_per_m,
        }),
    )
}

pub fn read_trips(path: &Path) -> Result<TripTable> {
    let trips = read_rows::<TripRow>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            check_id(path, i, r.id)?;
            Ok(Trip {
                origin: r.origin,
                destination: r.destination,
                mode: r.mode.parse::<Mode>()?,
                weight: r.weight,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TripTable { trips })
}

pub fn write_trips(trips: &TripTable, path: &Path) -> Result<()> {
    write_rows(
        path,
        trips.trips.iter().enumerate().map(|(id, t)| TripRow {
            id,
            origin: t.origin,
            destination: t.destination,
            mode: t.mode.to_string(),
            weight: t.weight,
        }),
    )
}
