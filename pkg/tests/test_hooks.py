"""
钩子系统测试
"""

import pytest

from edit_sim.hooks import HookPriority, HookRegistry, HookResult, HookType


class TestHookRegistry:
    """注册与调度测试"""

    @pytest.mark.unit
    def test_priority_order(self, hooks: HookRegistry):
        order = []
        hooks.register(HookType.SYNC, lambda ctx: order.append("monitor"), HookPriority.MONITOR)
        hooks.register(HookType.SYNC, lambda ctx: order.append("high"), HookPriority.HIGH)
        hooks.register(HookType.SYNC, lambda ctx: order.append("normal-1"))
        hooks.register(HookType.SYNC, lambda ctx: order.append("normal-2"))
        hooks.dispatch(HookType.SYNC, t=1)
        assert order == ["high", "normal-1", "normal-2", "monitor"]

    @pytest.mark.unit
    def test_context_data(self, hooks: HookRegistry):
        seen = {}
        hooks.register(HookType.ANOMALY, lambda ctx: seen.update(t=ctx.get("t"), count=ctx.get("count")))
        context = hooks.dispatch(HookType.ANOMALY, t=3, count=2)
        assert seen == {"t": 3, "count": 2}
        assert context.get("missing", "x") == "x"

    @pytest.mark.unit
    def test_abort_stops_later_callbacks(self, hooks: HookRegistry):
        calls = []
        hooks.register(HookType.ROLLBACK, lambda ctx: HookResult.ABORT, HookPriority.HIGHEST)
        hooks.register(HookType.ROLLBACK, lambda ctx: calls.append(1))
        context = hooks.dispatch(HookType.ROLLBACK, t=0)
        assert calls == []
        assert context.was_aborted()

    @pytest.mark.unit
    def test_failing_callback_is_skipped(self, hooks: HookRegistry):
        calls = []

        def broken(ctx):
            raise RuntimeError("boom")

        hooks.register(HookType.RUN_END, broken, HookPriority.HIGH)
        hooks.register(HookType.RUN_END, lambda ctx: calls.append(ctx.get("run_id")))
        hooks.dispatch(HookType.RUN_END, run_id="edit-default-s0", summary={})
        assert calls == ["edit-default-s0"]

    @pytest.mark.unit
    def test_unregister(self, hooks: HookRegistry):
        def callback(ctx):
            return None

        hooks.register(HookType.RUN_START, callback)
        assert hooks.count(HookType.RUN_START) == 1
        assert hooks.unregister(HookType.RUN_START, callback)
        assert not hooks.unregister(HookType.RUN_START, callback)
        assert hooks.count(HookType.RUN_START) == 0

    @pytest.mark.unit
    def test_critical_callback_raises(self, hooks: HookRegistry):
        calls = []

        def broken(ctx):
            raise OSError("disk full")

        hooks.register(HookType.ROUND_END, lambda ctx: calls.append("first"), HookPriority.HIGH)
        hooks.register(HookType.ROUND_END, broken, HookPriority.MONITOR, critical=True)
        with pytest.raises(OSError, match="disk full"):
            hooks.dispatch(HookType.ROUND_END, run_id="edit-default-s0", record=None)
        assert calls == ["first"]

    @pytest.mark.unit
    def test_result_values(self):
        assert [r.name for r in HookResult] == ["CONTINUE", "ABORT"]
