"""Back-to-back write regression for the wishbone bridge."""

import cocotb
from cocotb.clock import Clock
from cocotb.triggers import RisingEdge


async def wb_write(dut, adr, dat):
    dut.wb_cyc.value = 1
    dut.wb_stb.value = 1
    dut.wb_we.value = 1
    dut.wb_adr.value = adr
    dut.wb_dat_w.value = dat
    while True:
        await RisingEdge(dut.clk)
        if dut.wb_ack.value:
            break
    dut.wb_cyc.value = 0
    dut.wb_stb.value = 0
    dut.wb_we.value = 0


async def wb_read(dut, adr):
    dut.wb_cyc.value = 1
    dut.wb_stb.value = 1
    dut.wb_we.value = 0
    dut.wb_adr.value = adr
    while True:
        await RisingEdge(dut.clk)
        if dut.wb_ack.value:
            break
    dut.wb_cyc.value = 0
    dut.wb_stb.value = 0
    await RisingEdge(dut.clk)
    return int(dut.wb_dat_r.value)


@cocotb.test()
async def test_back_to_back_writes(dut):
    """Writes issued immediately after ack must not be dropped."""
    cocotb.start_soon(Clock(dut.clk, 10, units="ns").start())
    dut.rst.value = 1
    dut.wb_cyc.value = 0
    dut.wb_stb.value = 0
    dut.wb_we.value = 0
    for _ in range(2):
        await RisingEdge(dut.clk)
    dut.rst.value = 0
    await RisingEdge(dut.clk)

    for adr in range(8):
        await wb_write(dut, adr, 0xA5A50000 + adr)
    for adr in range(8):
        got = await wb_read(dut, adr)
        assert got == 0xA5A50000 + adr, f"register {adr} lost its write: {got:#x}"
