from .checkpoint import load_params, save_params
from .config import TrainConfig
from .fm import MlpModel, MlpParams, fm_loss, fm_loss_and_grad, fm_train, init_mlp_params, mlp_forward, model_mean
from .spg import (
    SpgBatch,
    SpgModel,
    SpgParams,
    gates,
    init_spg_params,
    leave_one_out_mask,
    spg_anchor,
    spg_forward,
    spg_loss_and_grad,
    spg_losses,
    spg_train,
    stopped_anchor,
)
