"""Deep Degradation Network core: tensors, model, training and checkpoints."""
