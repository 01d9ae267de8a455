# Joint objective, training loop, evaluation and ablation protocol.
