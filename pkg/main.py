import asyncio
import io
import time
from pathlib import Path

from astrbot.api import AstrBotConfig, logger
from astrbot.api.event import AstrMessageEvent, filter
from astrbot.api.star import Context, Star

from .src.common.errors import InputValidationError, NumericalFailure
from .src.db.database import CommonDatabase, plugin_data_dir
from .src.db.run_db_operations import RunDBOperations
from .src.render.report_renderer import AttributionRenderer
from .src.workflow.attribution_flow import AttributionFlow

PLUGIN_PATH = Path(__file__).parent

HELP_TEXT = """跨切片攻击溯源插件
/切片模拟 [种子]  生成五跳工业攻击案例场景（15 个切片、3 类资源）
/切片溯源 [场景名]  对最近生成（或指定）的场景执行溯源，输出因果边与攻击路径
/溯源记录 [页码]  查看历史运行记录
/溯源帮助  显示本帮助
命令行: python -m src.cli simulate|attribute|learn|evaluate|bench --help"""


class SliceAttributionPlugin(Star):
    def __init__(self, context: Context, config: AstrBotConfig):
        """
        插件初始化方法
        """
        super().__init__(context)
        self.config = config
        self.data_dir = plugin_data_dir()

        # 运行记录
        self.enable_history_recording = self.config.get("enable_history_recording", True)
        self.run_ops = RunDBOperations(CommonDatabase()) if self.enable_history_recording else None

        # 分析参数
        overrides = {
            "tau_causal": self.config.get("tau_causal", 0.42),
            "alpha": self.config.get("alpha", 0.05),
            "jobs": self.config.get("jobs", 1),
        }
        self.default_seed = int(self.config.get("default_seed", 7))
        self.flow = AttributionFlow(self.data_dir, self.run_ops, overrides)

        # 渲染
        self.enable_rendering = self.config.get("enable_rendering", True)
        if self.enable_rendering:
            logger.info("启用渲染结果输出功能")
            self.renderer = AttributionRenderer()
        self.save_rendered_results = self.config.get("save_rendered_results", False)
        self.render_output_path = self.config.get("render_output_path")

        logger.info("跨切片攻击溯源插件已初始化")

    def _save_rendered_image(self, image, scenario: str):
        """按配置保存渲染结果图片"""
        if not self.save_rendered_results:
            return
        try:
            if self.render_output_path:
                output_path = Path(self.render_output_path)
                if not output_path.is_absolute():
                    output_path = PLUGIN_PATH / output_path
            else:
                output_path = self.data_dir / "rendered_results"
            filename = f"attribution_{scenario}_{int(time.time())}.png"
            self.renderer.save(image, output_path / filename)
        except Exception as e:
            logger.error(f"保存溯源结果图片失败: {e}")

    @filter.command("切片模拟", alias={"模拟场景"})
    async def simulate(self, event: AstrMessageEvent, seed: str = ""):
        """
        生成五跳攻击案例场景

        参数:
            event: 消息事件对象
            seed: 随机种子（可选），缺省取插件配置 default_seed
        """
        try:
            seed_value = int(seed) if seed else self.default_seed
            if seed_value < 0:
                yield event.plain_result("种子必须为非负整数。")
                return
            directory = await asyncio.to_thread(self.flow.simulate_case_study, seed_value)
            yield event.plain_result(
                f"已生成案例场景 {directory.name}（种子 {seed_value}）。\n使用 /切片溯源 {directory.name} 进行溯源。"
            )
        except ValueError:
            yield event.plain_result(f"无效的种子: {seed}")
        except Exception as e:
            logger.error(f"生成场景失败: {e}")
            yield event.plain_result("生成场景时发生错误，请检查插件配置或联系管理员。")

    @filter.command("切片溯源", alias={"攻击溯源", "溯源"})
    async def attribute(self, event: AstrMessageEvent, scenario: str = ""):
        """
        对场景执行跨切片攻击溯源

        参数:
            event: 消息事件对象
            scenario: 场景名（可选），缺省为最近生成的场景
        """
        try:
            directory = self.flow.resolve_scenario(scenario)
            if directory is None:
                hint = f"未找到场景 {scenario}。" if scenario else "还没有可用的场景。"
                yield event.plain_result(f"{hint}请先使用 /切片模拟 生成场景。")
                return

            outcome = await asyncio.to_thread(self.flow.attribute_scenario, directory, self.enable_history_recording)

            if self.enable_rendering:
                rendered_image = await asyncio.to_thread(
                    self.renderer.render_attribution,
                    outcome.result,
                    directory.name,
                    outcome.scenario.truth.get("events"),
                )
                self._save_rendered_image(rendered_image, directory.name)

                from astrbot.core.message.components import Image

                img_byte_arr = io.BytesIO()
                rendered_image.save(img_byte_arr, format="PNG")
                yield event.chain_result([Image.fromBytes(img_byte_arr.getvalue())])
            else:
                yield event.plain_result(self.flow.summary_text(outcome))

        except InputValidationError as e:
            logger.error(f"场景数据不合法: {e}")
            yield event.plain_result(f"场景数据不合法: {e}")
        except NumericalFailure as e:
            logger.error(f"溯源数值计算失败: {e}")
            yield event.plain_result("溯源过程中数值计算失败，请更换场景或调整参数。")
        except Exception as e:
            logger.error(f"溯源失败: {e}")
            yield event.plain_result("溯源时发生错误，请检查插件配置或联系管理员。")

    @filter.command("溯源记录", alias={"溯源历史"})
    async def history(self, event: AstrMessageEvent, page: str = "1"):
        """
        查看溯源运行记录

        参数:
            event: 消息事件对象
            page: 页码
        """
        try:
            page_value = int(page) if page.isdigit() else 1
            text = await asyncio.to_thread(self.flow.history_text, page_value)
            yield event.plain_result(text)
        except Exception as e:
            logger.error(f"查询溯源记录失败: {e}")
            yield event.plain_result("查询溯源记录时发生错误。")

    @filter.command("溯源帮助")
    async def show_help(self, event: AstrMessageEvent):
        """显示插件帮助"""
        yield event.plain_result(HELP_TEXT)

    async def terminate(self):
        """
        插件销毁方法，在插件卸载时调用
        """
        if self.run_ops is not None:
            self.run_ops.db.close_thread_local_connection()
        logger.info("跨切片攻击溯源插件已卸载")
