//! Cross-checks an event-driven run against the dense reference.

use std::fmt;

use aeqsim_core::spikes::SpikeMap;
use aeqsim_core::{AeqStore, DenseRun, EventRun};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mismatch {
    /// `layer == None` is the encoded input.
    Spikes {
        layer: Option<usize>,
        t: usize,
        channel: usize,
        dense: Vec<(usize, usize)>,
        event: Vec<(usize, usize)>,
    },
    Shape {
        layer: Option<usize>,
    },
    ClassPotentials {
        dense: Vec<i16>,
        event: Vec<i16>,
    },
    Label {
        dense: usize,
        event: usize,
    },
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |l: &Option<usize>| l.map_or("input".to_string(), |l| format!("layer {l}"));
        match self {
            Mismatch::Spikes { layer, t, channel, dense, event } => {
                let only_dense: Vec<_> = dense.iter().filter(|p| !event.contains(p)).take(4).collect();
                let only_event: Vec<_> = event.iter().filter(|p| !dense.contains(p)).take(4).collect();
                write!(
                    f,
                    "{} t={t} c={channel}: {} dense vs {} event spikes; dense only {:?}, event only {:?}",
                    name(layer),
                    dense.len(),
                    event.len(),
                    only_dense,
                    only_event
                )
            }
            Mismatch::Shape { layer } => write!(f, "{}: store shape differs", name(layer)),
            Mismatch::ClassPotentials { dense, event } => write!(f, "class potentials: dense {dense:?}, event {event:?}"),
            Mismatch::Label { dense, event } => write!(f, "label: dense {dense}, event {event}"),
        }
    }
}

fn compare_store(layer: Option<usize>, maps: &[SpikeMap], store: &AeqStore) -> Result<(), Mismatch> {
    if maps.len() != store.timesteps() || maps.iter().any(|m| m.channels() != store.channels() || m.dims() != store.dims()) {
        return Err(Mismatch::Shape { layer });
    }
    for (t, map) in maps.iter().enumerate() {
        for channel in 0..map.channels() {
            let dense = map.positions(channel);
            let event = store.spike_positions(channel, t);
            if dense != event {
                return Err(Mismatch::Spikes { layer, t, channel, dense, event });
            }
        }
    }
    Ok(())
}

/// First difference, checked in data-flow order: input, each layer, classifier.
pub fn compare_runs(dense: &DenseRun, event: &EventRun) -> Result<(), Mismatch> {
    compare_store(None, &dense.inputs, &event.input)?;
    if dense.outputs.len() != event.outputs.len() {
        return Err(Mismatch::Shape { layer: Some(dense.outputs.len().min(event.outputs.len())) });
    }
    for (l, (maps, store)) in dense.outputs.iter().zip(&event.outputs).enumerate() {
        compare_store(Some(l), maps, store)?;
    }
    if dense.class_potentials != event.class_potentials {
        return Err(Mismatch::ClassPotentials { dense: dense.class_potentials.clone(), event: event.class_potentials.clone() });
    }
    if dense.label != event.label {
        return Err(Mismatch::Label { dense: dense.label, event: event.label });
    }
    Ok(())
}
