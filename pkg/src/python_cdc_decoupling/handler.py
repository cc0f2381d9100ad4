from typing import Any, Mapping, Optional

from python_cdc_decoupling.classes.enums import ClassifierMode
from python_cdc_decoupling.classes.types import Action, CommandActionType, FlagSpec
from python_cdc_decoupling.commands import SWEEP_AXES, cmd_eval, cmd_gen, cmd_sweep, cmd_train
from python_cdc_decoupling.tools.logger import logger


def _flag(*names: str, **kwargs) -> FlagSpec:
    return names, kwargs


CONFIG_FLAG = _flag("--config", help="JSON run config file (flags override its values)")
REPORT_FLAG = _flag("--report", help="Report path (JSON)")
SEED_FLAG = _flag("--seed", type=int, help="Seed (defaults to $CDC_SEED, then 0)")
SIMILARITY_FLAG = _flag("--similarity-matrix", dest="similarity_matrix", action="store_true",
                        help="Add the M x M template similarity matrix to the report")

SCM_FLAGS: list[FlagSpec] = [
    _flag("--dim", dest="d", type=int, help="Embedding dimension d"),
    _flag("--base-classes", dest="c_base", type=int, help="Number of base classes"),
    _flag("--new-classes", dest="c_new", type=int, help="Number of new classes"),
    _flag("--relevant", dest="n_relevant", type=int, help="Task-relevant factor count"),
    _flag("--irrelevant", dest="n_irrelevant", type=int, help="Task-irrelevant factor count"),
    _flag("--factors-per-class", dest="factors_per_class", type=int, help="Relevant factors bound to a class"),
    _flag("--noise-sigma", dest="noise_sigma", type=float, help="Isotropic noise level"),
    _flag("--irrelevant-scale", dest="irrelevant_scale", type=float, help="Scale of irrelevant loadings"),
    _flag("--confound-strength", dest="confound_strength", type=float,
          help="Correlation of irrelevant loadings with class on base splits"),
    _flag("--anchor-noise", dest="anchor_noise", type=float, help="Distortion of the hand-crafted anchors"),
    _flag("--style-strength", dest="style_strength", type=float, help="Shared style component of every image"),
    _flag("--anchor-style-mean", dest="anchor_style_mean", type=float,
          help="Mean weight of the style direction in the anchors"),
    _flag("--anchor-style-spread", dest="anchor_style_spread", type=float,
          help="Per-class spread of the anchor style weight"),
    _flag("--anchor-signature", dest="anchor_signature", type=float,
          help="Weight of the class signature in the anchors"),
    _flag("--test-shots", dest="test_shots", type=int, help="Test samples per class"),
]

TRAIN_FLAGS: list[FlagSpec] = [
    _flag("--preset", choices=["base-to-new", "ood"], help="Named hyperparameter preset"),
    _flag("--m", type=int, help="Number of templates M"),
    _flag("--epochs", type=int, help="Training epochs"),
    _flag("--batch-size", dest="batch_size", type=int, help="Minibatch size"),
    _flag("--lr", dest="learning_rate", type=float, help="SGD learning rate"),
    _flag("--beta", type=float, help="Decoupling loss weight"),
    _flag("--gamma", type=float, help="Consistency loss weight"),
    _flag("--template-dim", dest="template_dim", type=int, help="Length p of each template parameter"),
    _flag("--init-scale", dest="init_scale", type=float, help="Scale of the initial template parameters"),
    _flag("--projection-scale", dest="projection_scale", type=float,
          help="Length of the offset produced by a unit template parameter"),
    _flag("--channels", help="Augmentation preset (standard, shared-mask, identity) or explicit spec"),
    _flag("--no-image-branch", dest="image_branch", action="store_false",
          help="Identity channels during training"),
]

INFERENCE_FLAGS: list[FlagSpec] = [
    _flag("--tau", type=float, help="Softmax temperature"),
    _flag("--evidence-tau", dest="evidence_tau", type=float, help="Evidence temperature"),
    _flag("--decoupling-tau", dest="decoupling_tau", type=float,
          help="Temperature of the cross-template classifier in the decoupling loss"),
    _flag("--clamp", type=float, help="Evidence clamp"),
    _flag("--classifier", choices=[mode.value for mode in ClassifierMode], help="dstc or average"),
    _flag("--literal-strength", dest="literal_strength", action="store_true",
          help="Dirichlet strength sum(e) + 1 instead of sum(e) + C"),
]

SHOTS_FLAG = _flag("--shots", type=int, help="Base-train samples kept per base class")


class CommandHandler:
    """Declarative table of the `cdc` commands and their flags."""

    @property
    def command_actions(self) -> CommandActionType:
        return {
            "gen": {
                "action": cmd_gen,
                "help": "Generate a synthetic SCM dataset",
                "flags": [CONFIG_FLAG, SEED_FLAG, SHOTS_FLAG, _flag("--out", help="Dataset output path")]
                         + SCM_FLAGS,
            },
            "train": {
                "action": cmd_train,
                "help": "Train templates on base-train and write a checkpoint and a report",
                "flags": [CONFIG_FLAG, REPORT_FLAG, SEED_FLAG, SHOTS_FLAG, SIMILARITY_FLAG,
                          _flag("--dataset", help="CDCDS v1 dataset"),
                          _flag("--checkpoint", help="Checkpoint output path")]
                         + TRAIN_FLAGS + INFERENCE_FLAGS,
            },
            "eval": {
                "action": cmd_eval,
                "help": "Evaluate a checkpoint on the base-test and new-test partitions",
                "flags": [CONFIG_FLAG, REPORT_FLAG, SIMILARITY_FLAG,
                          _flag("--dataset", help="CDCDS v1 dataset"),
                          _flag("--checkpoint", help="Checkpoint to evaluate"),
                          _flag("--per-template-only", dest="per_template_only", action="store_true",
                                help="Report solo-template metrics only")]
                         + INFERENCE_FLAGS,
            },
            "sweep": {
                "action": cmd_sweep,
                "help": "Train and evaluate once per setting of one axis",
                "flags": [CONFIG_FLAG, REPORT_FLAG, SEED_FLAG, SHOTS_FLAG,
                          _flag("--axis", required=True, choices=sorted(SWEEP_AXES), help="Sweep axis"),
                          _flag("--values", required=True, help="Comma-separated axis values"),
                          _flag("--seeds", help="Comma-separated seeds, rows average over them"),
                          _flag("--dataset", help="CDCDS v1 dataset (default: generate one per seed)")]
                         + TRAIN_FLAGS + INFERENCE_FLAGS + SCM_FLAGS,
            },
        }

    def find_action(self, command: str) -> Optional[Action]:
        return self.command_actions.get(command)

    def process_command(self, command: str, flags: Mapping[str, Any]) -> int:
        action_data = self.find_action(command)
        if action_data is None:
            logger.error("Unknown command '%s'", command)
            return 2
        logger.info("Running '%s' with flags %s", command, dict(flags))
        return action_data["action"](flags)
