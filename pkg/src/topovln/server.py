"""MCP server exposing the navigation stack as tools."""

import json
import logging
from typing import Any, Dict, Optional

from mcp.server import Server
from mcp.types import (
    CallToolResult,
    ListToolsResult,
    TextContent,
    Tool,
)

from .config import RunConfig, settings
from .tools import NavigatorTools


class NavigatorMCPServer:
    """MCP server for topological navigation experiments."""

    def __init__(self, config: Optional[RunConfig] = None) -> None:
        self.server = Server(settings.mcp_server_name)
        self.config = config
        self.navigator_tools: Optional[NavigatorTools] = None
        self._setup_handlers()

    def _get_navigator_tools(self) -> NavigatorTools:
        """Lazy initialization of NavigatorTools."""
        if self.navigator_tools is None:
            self.navigator_tools = NavigatorTools(self.config)
        return self.navigator_tools

    async def list_tools(self) -> ListToolsResult:
        base_tools = [
            Tool(
                name="list_available_tools",
                description="List all navigation tools by category",
                inputSchema={"type": "object", "properties": {}, "additionalProperties": False},
            ),
        ]
        return ListToolsResult(tools=base_tools + self._get_navigator_tools().get_tools())

    async def call_tool(self, name: str, arguments: Dict[str, Any]) -> CallToolResult:
        try:
            tools = self._get_navigator_tools()
            if name == "list_available_tools":
                summary = tools.get_available_tools_summary()
                return CallToolResult(
                    content=[TextContent(type="text", text=json.dumps(summary, indent=2))]
                )
            return await tools.call_tool(name, arguments or {})
        except Exception:
            logging.exception(f"Error executing tool '{name}' with arguments {arguments}")
            return CallToolResult(
                content=[TextContent(type="text", text=f"Error executing {name}.")],
                isError=True,
            )

    def _setup_handlers(self) -> None:
        """Setup MCP server handlers."""

        @self.server.list_tools()
        async def list_tools() -> ListToolsResult:
            return await self.list_tools()

        @self.server.call_tool()
        async def call_tool(name: str, arguments: Dict[str, Any]) -> CallToolResult:
            return await self.call_tool(name, arguments)

    async def run(self) -> None:
        """Run the MCP server over stdio."""
        from mcp.server.stdio import stdio_server

        async with stdio_server() as (read_stream, write_stream):
            await self.server.run(
                read_stream, write_stream, self.server.create_initialization_options()
            )
