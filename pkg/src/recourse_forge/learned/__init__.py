from .generators import (
    GeneratorModel,
    TrainConfig,
    UnseenLabelSpace,
    decoder_raw,
    predict,
    predict_batch,
    train_categorical,
    train_decoder,
    train_generator,
    train_multilabel,
)
from .gradcheck import gradient_check
from .knn import fit_knn, hamming_distance, knn_predict
from .modelio import dumps_model, load_model, loads_model, save_model
from .network import MLP

__all__ = [
    "GeneratorModel",
    "MLP",
    "TrainConfig",
    "UnseenLabelSpace",
    "decoder_raw",
    "dumps_model",
    "fit_knn",
    "gradient_check",
    "hamming_distance",
    "knn_predict",
    "load_model",
    "loads_model",
    "predict",
    "predict_batch",
    "save_model",
    "train_categorical",
    "train_decoder",
    "train_generator",
    "train_multilabel",
]
