"""Cocotb regression for the 4-bit pipelined multiplier."""

import random

import cocotb
from cocotb.clock import Clock
from cocotb.triggers import RisingEdge

PIPELINE_DEPTH = 3


async def reset_dut(dut):
    dut.reset.value = 1
    dut.a.value = 0
    dut.b.value = 0
    for _ in range(2):
        await RisingEdge(dut.clk)
    dut.reset.value = 0
    await RisingEdge(dut.clk)


async def check_product(dut, a, b):
    dut.a.value = a
    dut.b.value = b
    for _ in range(PIPELINE_DEPTH + 1):
        await RisingEdge(dut.clk)
    assert dut.valid.value == 1, f"valid not asserted for {a}*{b}"
    got = int(dut.product.value)
    assert got == a * b, f"Product incorrect: {a}*{b} = {got}, expected {a * b}"


@cocotb.test()
async def test_directed(dut):
    """Directed cases including the 0 and 15 edge operands."""
    cocotb.start_soon(Clock(dut.clk, 10, units="ns").start())
    await reset_dut(dut)
    for a, b in [(0, 0), (0, 15), (15, 0), (15, 15), (1, 1), (7, 9)]:
        await check_product(dut, a, b)


@cocotb.test()
async def test_random(dut):
    """Randomized operand pairs against the software model."""
    cocotb.start_soon(Clock(dut.clk, 10, units="ns").start())
    await reset_dut(dut)
    rng = random.Random(1234)
    for _ in range(50):
        await check_product(dut, rng.randrange(16), rng.randrange(16))
