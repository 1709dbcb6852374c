"""Software reproduction of a small FPGA RISC processor that classifies handwriting with a CNN.

Modules: ``softfp`` (truncating single-precision datapath), ``isa`` and
``assembler`` (toolchain), ``machine`` (instruction-level emulator with the
memory-mapped peripherals), ``imgproc`` (image compressor), ``goldmodel``
(reference CNN forward passes), ``firmware`` (bundled assembly) and ``cli``.
"""

__version__ = "0.1.0"
