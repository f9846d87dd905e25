//! Ready-made skeletons.

use crate::archspace::{BackboneSkeleton, LayerDescriptor};

/// Desk-scale backbone for 1x32x32 inputs and 4 classes: a fixed stride-2
/// stem followed by eight searchable layers. Layers 4, 7 and 8 feed the
/// pooled features (the stand-ins for neck outputs).
pub fn desk_backbone() -> BackboneSkeleton {
    BackboneSkeleton {
        input_channels: 1,
        input_height: 32,
        input_width: 32,
        num_classes: 4,
        layers: vec![
            LayerDescriptor::conv3x3(8, 2, false),
            LayerDescriptor::conv3x3(16, 1, true),
            LayerDescriptor::conv3x3(24, 2, true),
            LayerDescriptor::conv3x3(24, 1, true),
            LayerDescriptor::conv1x1(32, 1, true).neck_output(),
            LayerDescriptor::conv3x3(32, 2, true),
            LayerDescriptor::conv3x3(48, 1, true),
            LayerDescriptor::conv1x1(48, 1, true).neck_output(),
            LayerDescriptor::conv3x3(64, 1, true).neck_output(),
            LayerDescriptor::global_avg_pool(),
            LayerDescriptor::linear_head(),
        ],
    }
}

/// Eight searchable layers with varied widths and strides; small enough to
/// enumerate all 65,536 configurations.
pub fn toy_skeleton() -> BackboneSkeleton {
    let widths = [8, 16, 16, 24, 24, 32, 32, 48];
    let strides = [1, 2, 1, 2, 1, 2, 1, 1];
    let mut layers: Vec<_> = widths
        .iter()
        .zip(strides)
        .enumerate()
        .map(|(i, (&w, s))| {
            if i % 3 == 2 {
                LayerDescriptor::conv1x1(w, s, true)
            } else {
                LayerDescriptor::conv3x3(w, s, true)
            }
        })
        .collect();
    layers.push(LayerDescriptor::global_avg_pool());
    layers.push(LayerDescriptor::linear_head());
    BackboneSkeleton {
        input_channels: 3,
        input_height: 16,
        input_width: 16,
        num_classes: 4,
        layers,
    }
}

/// Eleven searchable layers, matching the length of the published width
/// vectors. Positions 5, 7 and 11 are marked as neck outputs.
pub fn eleven_layer_skeleton(base: usize) -> BackboneSkeleton {
    let mut layers: Vec<_> = (1..=11)
        .map(|pos| {
            let l = LayerDescriptor::conv3x3(base, if pos % 4 == 0 { 2 } else { 1 }, true);
            if matches!(pos, 5 | 7 | 11) {
                l.neck_output()
            } else {
                l
            }
        })
        .collect();
    layers.push(LayerDescriptor::global_avg_pool());
    layers.push(LayerDescriptor::linear_head());
    BackboneSkeleton {
        input_channels: 1,
        input_height: 32,
        input_width: 32,
        num_classes: 4,
        layers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for (sk, n) in [(desk_backbone(), 8), (toy_skeleton(), 8), (eleven_layer_skeleton(32), 11)] {
            sk.validate().unwrap();
            assert_eq!(sk.searchable_count(), n);
        }
    }
}
