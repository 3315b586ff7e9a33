"""Trainable diagonal, delta-rule and full-matrix LRNNs."""

from .model import (ModelConfig, backward, cross_entropy, forward, init_params, loss_and_grads,
                    predict, canonical_range)
from .optim import AdamW, clip_grads, global_norm, lr_at
from .loop import (GroupTask, ModArithTask, ParityTask, Task, TrainConfig, TrainResult, TrainingDiverged,
                   compiled_predictor, eval_length_gen, eval_length_range, evaluate, load_checkpoint, make_task, save_checkpoint,
                   multiplication_table, scaled_accuracy, score_batch, task_from_dict, default_config, TASK_DEFAULTS, train_loop, trainable_predictor, write_metrics_csv)
