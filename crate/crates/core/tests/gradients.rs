use slimnas_core::supernet::gradcheck::{gradient_check, CheckedLayer};

#[test]
fn gates_hold_on_five_seeds() {
    for seed in 0..5 {
        for (layer, gate) in [
            (CheckedLayer::Conv3x3, 1e-3),
            (CheckedLayer::Conv1x1, 1e-3),
            (CheckedLayer::LinearHead, 1e-4),
            (CheckedLayer::Relu, 1e-4),
        ] {
            let err = gradient_check(layer, seed);
            assert!(err < gate, "{layer:?} seed {seed}: {err:e}");
        }
    }
}
