"""Hardware-aware recurrent spiking networks with memristor weights and memcapacitor time constants."""

from .devices import DeviceCalibration, MemcapacitorDevice, MemristorPair
from .network import CrossbarConfig, Network, NetworkConfig, SpikeRaster, build_rsnn, forward
from .training import TrainConfig, evaluate, loss_and_grads, train

__version__ = "0.1.0"

__all__ = [
    "CrossbarConfig", "DeviceCalibration", "MemcapacitorDevice", "MemristorPair", "Network",
    "NetworkConfig", "SpikeRaster", "TrainConfig", "build_rsnn", "evaluate", "forward",
    "loss_and_grads", "train",
]
