"""
Configuration for experiments
"""

# Structure variants (d_model x layers); heads keep head_dim at 64
MODEL_VARIANTS = [
    {'name': 'tiny', 'd_model': 64, 'n_layers': 2, 'n_heads': 4},
    {'name': 'small_3', 'd_model': 256, 'n_layers': 3, 'n_heads': 4},
    {'name': 'small_6', 'd_model': 256, 'n_layers': 6, 'n_heads': 4},
    {'name': 'small_9', 'd_model': 256, 'n_layers': 9, 'n_heads': 4},
    {'name': 'base_3', 'd_model': 512, 'n_layers': 3, 'n_heads': 8},
    {'name': 'default', 'd_model': 512, 'n_layers': 6, 'n_heads': 8},
    {'name': 'base_9', 'd_model': 512, 'n_layers': 9, 'n_heads': 8},
]

# Tracker thresholds per scene style
TRACKER_PRESETS = [
    {'name': 'default', 'tau_det': 0.1, 'tau_new': 0.6, 'window_T': 30},
    {'name': 'sports', 'tau_det': 0.1, 'tau_new': 0.7, 'window_T': 30},
    {'name': 'dance', 'tau_det': 0.1, 'tau_new': 0.8, 'window_T': 30},
    {'name': 'crowd', 'tau_det': 0.1, 'tau_new': 0.6, 'window_T': 30},
]

# Synthetic scenes
SCENE_PRESETS = [
    {'name': 'easy', 'n_objects': 5, 'n_frames': 100, 'appearance_similarity': 0.2},
    {'name': 'occluded', 'n_objects': 10, 'n_frames': 200, 'appearance_similarity': 0.4,
     'n_random_occlusions': 6, 'max_gap': 15},
    {'name': 'similar', 'n_objects': 10, 'n_frames': 200, 'appearance_similarity': 0.8,
     'n_random_occlusions': 6, 'max_gap': 15},
]

# Short schedule for desk-scale runs on synthetic data
TRAIN_PRESETS = [
    {'name': 'default'},
    {'name': 'desk', 'epochs': 6, 'clip_lengths': (4, 8, 16, 32), 'accumulate': 1, 'batch_size': 4,
     'lr': 1e-3, 'min_lr': 1e-5, 'clips_per_sequence': 8, 'appearance_jitter': 0.02},
]


def preset(table, name):
    """Parameters of a named preset, without its name."""
    for entry in table:
        if entry['name'] == name:
            return {k: v for k, v in entry.items() if k != 'name'}
    raise KeyError(f"unknown preset {name!r}; choose from {[e['name'] for e in table]}")
