"""Grid-grammar AND-OR graphs with a differentiable parsing operator."""

from .errors import (AogError, CapacityError, DataError, FormatError,
                     NumericError, ParameterError, StateError, VersionError)
from .grammar import (Aog, AogNode, Axis, Configuration, Kind, ParseTree,
                      Rect, build_aog, collapse, count_parse_trees,
                      enumerate_configurations, enumerate_parse_trees,
                      sample_parse_tree)
from .parsing import (BruteForceResult, ForwardState, GradientMode, Mode,
                      backward, brute_force_root, collapse_configuration,
                      compute_omega1, extract_parse_tree, forward)
from .scoremaps import (Roi, TerminalConvParams, TerminalScoreMaps,
                        cell_pixel_span, compute_terminal_maps, conv_backward,
                        finite_diff_check, init_params, pool_backward,
                        pool_terminal, pooled_feature)
from .serial import load_aog, save_aog
from .synthetic import (Sample, SyntheticSpec, config_match, generate,
                        jitter_rois, load_dataset, save_dataset)
from .training import (EvalResult, Model, TrainConfig, TrainHistory, evaluate,
                       grad_check_end_to_end, load_checkpoint, save_checkpoint,
                       softmax_xent, train)

__version__ = "0.1.0"
