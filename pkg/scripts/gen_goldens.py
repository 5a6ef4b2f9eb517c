"""Regenerate frozen golden outputs used by the self-consistency tests.

Run from the repository root:  python3 scripts/gen_goldens.py
"""

from pathlib import Path

from admn.autodiff import Tensor
from admn.layerdrop import LayerMask
from admn.model import MultimodalNet, mask_activities, toy_config
from admn.rng import RngState
from admn.tensor_io import save_tensor


def main():
    out_dir = Path(__file__).resolve().parent.parent / "tests" / "golden"
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = toy_config()
    net = MultimodalNet(cfg, RngState(2024))
    inputs = [Tensor(RngState(500 + m).normal((2, 1, 16, 16))) for m in range(2)]
    pred = net.forward(inputs, mask_activities(LayerMask.full(cfg.depths)))
    save_tensor(out_dir / "toy_forward.admt", pred.data)
    print(f"wrote {out_dir / 'toy_forward.admt'}: {pred.data.tolist()}")


if __name__ == "__main__":
    main()
